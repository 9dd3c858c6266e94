"""Worker-count resolution, seeded substreams and ordered parallel map."""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

ENV_WORKERS = "FORMCOUNT_WORKERS"


def resolve_workers(workers=None) -> int:
    if workers is None:
        env = os.environ.get(ENV_WORKERS)
        workers = int(env) if env else (os.cpu_count() or 1)
    workers = int(workers)
    if workers < 1:
        raise ValueError("worker count must be >= 1")
    return workers


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        # derive a reproducible child from the generator's own state
        return np.random.SeedSequence(int(seed.integers(0, 2**63 - 1)))
    return np.random.SeedSequence(int(seed))


def substreams(seed, count: int) -> list:
    """``count`` independent generators; stream ``i`` depends only on (seed, i)."""
    children = seed_sequence(seed).spawn(count)
    return [np.random.default_rng(c) for c in children]


def ordered_map(fn, items, workers=None) -> list:
    """Map ``fn`` over ``items``; results come back in input order."""
    items = list(items)
    workers = min(resolve_workers(workers), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
