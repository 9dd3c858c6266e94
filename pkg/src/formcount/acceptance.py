"""Acceptance criteria as runnable checks; shared by the test suite and ``formcount verify``."""

from __future__ import annotations

import math
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from formcount.discrepancy import (EuclideanBall, exceedance_from_samples, interpolation_check,
                                   second_moment_experiment)
from formcount.experiments import (ExperimentConfig, fit_exponent, fixed_target_run,
                                   supmin_run, uniform_target_run)
from formcount.forms import Interval, PolyForm, Signature
from formcount.geometry import cf_closed_form_d2_identity, compute_cf, mc_volume, predicted_volume
from formcount.lattice import LatticeBasis, count_in_interval, count_lattice_in_region, histogram

SEED = 0


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number, name, fn, workers=None) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        passed, detail = fn(workers)
    except Exception as exc:  # a crash is a failed criterion, not a crashed suite
        passed, detail = False, f"error {type(exc).__name__}: {exc}"
    return CriterionResult(number, name, passed, detail, time.perf_counter() - t0)


def cf_closed_form(workers=None):
    parts, ok = [], True
    for (p, q), target in (((2, 1), math.pi * math.sqrt(2)), ((2, 2), math.pi**2 / 2)):
        sig = Signature(p, q, 2)
        F = PolyForm.identity(sig)
        t0 = time.perf_counter()
        est = compute_cf(F, 1_000_000, seed=SEED, workers=workers)
        dt = time.perf_counter() - t0
        rel = abs(est.value - target) / target
        # independent oracles: the closed form, and a Monte Carlo volume at T = 50
        closed = cf_closed_form_d2_identity(p, q)
        I = Interval(-0.5, 0.5)
        mc, _ = mc_volume(F, I, 50.0, 10_000_000, seed=SEED, workers=workers)
        mc_rel = abs(mc - predicted_volume(F, I, 50.0)) / predicted_volume(F, I, 50.0)
        good = rel <= 0.005 and dt < 10 and abs(closed - target) <= 1e-12 * target and mc_rel <= 0.05
        ok &= good
        parts.append(f"({p},{q},2) c_F={est.value:.6f} rel={rel:.1e} t={dt:.1f}s mc@50 rel={mc_rel:.3f}")
    return ok, "; ".join(parts)


def count_identity(workers=None):
    rng = np.random.default_rng(SEED)
    sigs = [Signature(2, 1, 2), Signature(2, 2, 2), Signature(3, 1, 2), Signature(3, 2, 2),
            Signature(2, 1, 2), Signature(1, 2, 2)]
    bad = 0
    for _ in range(100):
        sig = sigs[int(rng.integers(len(sigs)))]
        F = PolyForm.random_rational(sig, rng)
        t = float(rng.uniform(1.0, 15.0 if sig.n <= 4 else 10.0))
        lo = float(rng.uniform(-20, 20))
        I = Interval(lo, lo + float(rng.uniform(0.1, 20)))
        rep = count_in_interval(F, I, t, workers=workers, exact=True)
        # Z^n g is the lattice of the change of variables w = v g
        other = count_lattice_in_region(LatticeBasis.from_form(F), I, sig, t, h=F)
        bad += (not rep.exact) or rep.count != other
    return bad == 0, f"{100 - bad}/100 random rational forms agree on the exact path"


def exhaustive_counts(workers=None):
    F = PolyForm.identity(Signature(2, 1, 2))
    I = Interval(-0.5, 0.5)
    c1 = count_in_interval(F, I, 1, workers).count
    c2 = count_in_interval(F, I, 2, workers).count
    h = histogram(F, 1, Interval(-2, 2), 1, workers).buckets.tolist()
    ok = c1 == 1 and c2 == 9 and h == [0, 2, 1, 4]
    return ok, f"t=1 -> {c1}, t=2 -> {c2}, histogram {tuple(h)}"


def volume_decay(workers=None):
    t0 = time.perf_counter()
    F = PolyForm.identity(Signature(2, 1, 2))
    I = Interval(-0.5, 0.5)
    compute_cf(F, 1_000_000, seed=SEED, workers=workers)
    series = []
    for T in (10.0, 20.0, 40.0, 80.0):
        est, _ = mc_volume(F, I, T, 10_000_000, seed=SEED, workers=workers)
        pred = predicted_volume(F, I, T)
        series.append((T, abs(est - pred) / pred))
    slope, r2 = fit_exponent(series)
    last = series[-1][1]
    dt = time.perf_counter() - t0
    devs = ", ".join(f"{e:.4f}" for _, e in series)
    return (slope <= -0.5 and last <= 0.05 and dt < 120,
            f"rel dev [{devs}] slope={slope:.3f} r2={r2:.2f}")


def siegel_mean(workers=None):
    t0 = time.perf_counter()
    rep = second_moment_experiment(EuclideanBall(3, 100.0), 200, 10007, seed=SEED, workers=workers)
    dt = time.perf_counter() - t0
    rel = abs(rep.mean_count - 100.0) / 100.0
    return rel <= 0.05 and dt < 60, f"mean count {rep.mean_count:.2f} (rel {rel:.3f}), {dt:.1f}s"


def rogers_bound(workers=None):
    ok, parts = True, []
    for V in (100.0, 300.0, 1000.0):
        rep = second_moment_experiment(EuclideanBall(3, V), 200, 10007, seed=SEED, workers=workers)
        T = 10 * math.sqrt(V)
        frac, err = exceedance_from_samples(rep.samples, T)
        cheb = rep.mean_sq_disc / T**2
        good = rep.ratio <= 10 and frac <= cheb + 3 * err
        ok &= good
        parts.append(f"V={V:g} ratio={rep.ratio:.2f} exceed={frac:.3f}<=~{cheb:.3f}")
    return ok, "; ".join(parts)


def shrinking_target_desk(workers=None):
    sig = Signature(3, 2, 2)
    cfg = ExperimentConfig(p=3, q=2, d=2, kappa=1.0, c=2.0, xi=0.0,
                           t_grid=[20.0, 40.0, 60.0, 80.0], volume_samples=4_000_000,
                           rng_seed=SEED)
    children = np.random.SeedSequence(SEED).spawn(20)
    passed = 0
    for child in children:
        F = PolyForm.random(sig, np.random.default_rng(child), eps=0.3)
        pts = fixed_target_run(cfg, F, workers)
        ne = [p.normalized_error for p in pts]
        good = all(p.exists for p in pts) and all(e <= 2 * ne[0] for e in ne)
        passed += good
    return passed >= 18, f"{passed}/20 forms bounded and solvable at every t"


def uniform_windows(workers=None):
    cfg = ExperimentConfig(p=3, q=2, d=2, g_seed=SEED, kappa=0.25, eta=0.0, n_cap=1.0,
                           t_grid=[60.0], rng_seed=SEED, spot_checks=20)
    rep = uniform_target_run(cfg, workers=workers)
    agree = sum(c.agrees for c in rep.spot_checks)
    worst = rep.worst.worst_rel_error
    ok = agree == len(rep.spot_checks) == 20 and worst < 1
    return ok, f"{agree}/{len(rep.spot_checks)} spot windows exact, worst rel error {worst:.4f}"


def supmin_oracle(workers=None):
    F = PolyForm.identity(Signature(2, 1, 2))
    vals = [supmin_run(F, t, 1.0, workers).supmin for t in (1, 2, 3, 4)]
    mono = all(b <= a for a, b in zip(vals, vals[1:]))
    return vals[0] == 0.5 and mono, f"supmin over t=1..4: {vals}"


def interpolation(workers=None, triples: int = 1000, samples: int = 200_000):
    rng = np.random.default_rng(SEED)
    sigs = [Signature(2, 1, 2), Signature(2, 2, 2), Signature(3, 1, 2)]
    fails, worst = 0, math.inf
    for k in range(triples):
        sig = sigs[k % len(sigs)]
        F = PolyForm.random_rational(sig, rng)
        ts = np.sort(rng.uniform(1.0, 8.0, size=3))
        a, b = np.sort(rng.uniform(-10, 10, size=2))
        m1, m2 = np.sort(rng.uniform(a, b, size=2))
        i1, i2 = np.sort(rng.uniform(m1, m2, size=2))
        res = interpolation_check(F, (Interval(i1, i2), ts[0]), (Interval(m1, m2), ts[1]),
                                  (Interval(a, b), ts[2]), "monte_carlo", samples,
                                  seed=SEED + k, workers=workers)
        fails += not res.holds
        worst = min(worst, res.slack + 3 * res.vol_stderr)
    return fails == 0, f"{triples - fails}/{triples} nested triples hold (min margin {worst:.3g})"


DETERMINISM_RUNS = [
    ["cf", "--p", "2", "--q", "1", "--identity", "--volume-samples", "200000"],
    ["volume", "--p", "2", "--q", "1", "--identity", "--t-grid", "10,20",
     "--volume-samples", "200000"],
    ["count", "--p", "2", "--q", "1", "--identity", "--lo", "-0.5", "--hi", "0.5", "--t", "6"],
    ["histogram", "--p", "3", "--q", "2", "--g-seed", "1", "--t", "12", "--lo", "-2",
     "--hi", "2", "--width", "0.25"],
    ["rogers", "--dim", "3", "--volumes", "100", "--k-lattices", "20"],
    ["fixed-target", "--p", "3", "--q", "2", "--g-seed", "2", "--t-grid", "10,15,20",
     "--volume-samples", "200000"],
    ["uniform-target", "--p", "3", "--q", "2", "--g-seed", "2", "--kappa", "0.25",
     "--t-grid", "10,15", "--volume-samples", "200000", "--spot-checks", "5"],
    ["supmin", "--p", "2", "--q", "1", "--identity", "--t-grid", "1,2,3", "--n-cap", "1"],
]


def determinism(workers=None):
    from formcount.cli import main

    wflag = [] if workers is None else ["--workers", str(workers)]
    bad = []
    with tempfile.TemporaryDirectory() as tmp:
        for args in DETERMINISM_RUNS:
            blobs = []
            for rep in range(2):
                out = os.path.join(tmp, f"{args[0]}-{rep}.csv")
                code = main(args + ["--seed", "11", "--out", out, "--quiet"] + wflag)
                with open(out, "rb") as fh:
                    blobs.append((code, fh.read()))
            if blobs[0] != blobs[1] or blobs[0][0] != 0:
                bad.append(args[0])
    n = len(DETERMINISM_RUNS)
    return not bad, f"{n - len(bad)}/{n} subcommands byte-identical" + (f" (differ: {bad})" if bad else "")


CRITERIA = [
    (1, "c_F closed form", cf_closed_form),
    (2, "count identity", count_identity),
    (3, "exhaustive oracle counts", exhaustive_counts),
    (4, "volume decay", volume_decay),
    (5, "Siegel mean value", siegel_mean),
    (6, "Rogers second moment", rogers_bound),
    (7, "shrinking target desk run", shrinking_target_desk),
    (8, "uniform window consistency", uniform_windows),
    (9, "supmin oracle", supmin_oracle),
    (10, "interpolation inequality", interpolation),
    (11, "determinism", determinism),
]


def run_criterion(number: int, workers=None) -> CriterionResult:
    for num, name, fn in CRITERIA:
        if num == number:
            return _timed(num, name, fn, workers)
    raise ValueError(f"no criterion {number}")


def run_all(only=None, workers=None, echo=None) -> list[CriterionResult]:
    out = []
    for num, name, fn in CRITERIA:
        if only and num not in only:
            continue
        res = _timed(num, name, fn, workers)
        if echo:
            echo(res.line())
        out.append(res)
    return out
