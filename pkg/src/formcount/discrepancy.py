"""Discrepancy of lattice counts against volumes; Siegel/Rogers moment experiments."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from formcount._parallel import ordered_map, seed_sequence
from formcount.forms import Interval, PolyForm, Signature
from formcount.geometry import ball_volume, mc_volume, mc_volume_regions, predicted_volume
from formcount.lattice import (LatticeBasis, count_lattice_in_region, count_many,
                               sample_lattice)

VOL_MODES = ("predicted", "monte_carlo")


@dataclass(frozen=True)
class DiscrepancySample:
    lattice_seed: int | None
    count: int
    volume: float
    disc: float
    vol_mode: str = "exact"


@dataclass
class MomentReport:
    k_samples: int
    mean_count: float
    mean_sq_disc: float
    vol: float
    ratio: float
    prime: int = 0
    samples: list = field(default_factory=list, repr=False)

    @property
    def count_stderr(self) -> float:
        counts = np.array([s.count for s in self.samples], dtype=float)
        return float(counts.std(ddof=1) / math.sqrt(len(counts))) if len(counts) > 1 else math.inf

    def to_json(self) -> dict:
        return {"k_samples": self.k_samples, "mean_count": self.mean_count,
                "mean_sq_disc": self.mean_sq_disc, "vol": self.vol, "ratio": self.ratio,
                "prime": self.prime}

    def samples_csv(self, manifest: str | None = None) -> str:
        buf = io.StringIO()
        if manifest:
            buf.write(manifest + "\n")
        buf.write("seed,count,volume,disc\n")
        for s in self.samples:
            buf.write(f"{s.lattice_seed},{s.count},{float(s.volume)!r},{float(s.disc)!r}\n")
        return buf.getvalue()


def discrepancy(F: PolyForm, I: Interval, t: float, vol_mode: str = "predicted",
                samples: int = 1_000_000, seed=0, workers=None) -> DiscrepancySample:
    """``|N_F(I, t) - vol(F^-1(I) ∩ B_t)|`` for the lattice ``Z^n g``.

    With ``vol_mode="predicted"`` the volume is the leading term only, so the
    reported disc also carries the O(t^(n-d-1)) volume remainder.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if vol_mode not in VOL_MODES:
        raise ValueError(f"vol_mode must be one of {VOL_MODES}")
    if I.length == 0:
        return DiscrepancySample(None, 0, 0.0, 0.0, vol_mode)
    count = count_many(F, [(I, t)], workers)[0].count
    if vol_mode == "predicted":
        vol = predicted_volume(F, I, t)
    else:
        vol = mc_volume(F, I, t, samples, seed, workers)[0]
    return DiscrepancySample(None, count, vol, abs(count - vol), vol_mode)


# --- regions for lattice-averaged experiments --------------------------------

@dataclass(frozen=True)
class EuclideanBall:
    """Ball centred at the origin with prescribed volume."""

    n: int
    volume: float

    @property
    def radius(self) -> float:
        return (self.volume / ball_volume(self.n)) ** (1.0 / self.n)

    def count(self, L: LatticeBasis) -> int:
        return count_lattice_in_region(L, None, None, self.radius, siegel=True)


@dataclass(frozen=True)
class FormRegion:
    """``F0^-1(I) ∩ B_t``; its volume is a Monte Carlo estimate (declared)."""

    sig: Signature
    interval: Interval
    t: float
    volume_samples: int = 4_000_000
    volume_seed: int = 0

    @property
    def n(self) -> int:
        return self.sig.n

    @property
    def volume(self) -> float:
        return _form_region_volume(self.sig, self.interval, self.t,
                                   self.volume_samples, self.volume_seed)

    def count(self, L: LatticeBasis) -> int:
        return count_lattice_in_region(L, self.interval, self.sig, self.t, siegel=True)


_VOLUME_CACHE: dict = {}


def _form_region_volume(sig, I, t, samples, seed):
    key = (sig, I, t, samples, seed)
    if key not in _VOLUME_CACHE:
        F0 = PolyForm.identity(sig)
        _VOLUME_CACHE[key] = mc_volume(F0, I, t, samples, seed)[0]
    return _VOLUME_CACHE[key]


def lattice_seeds(seed, k: int) -> list[int]:
    """Per-lattice integer seeds derived from (seed, index)."""
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
            for c in seed_sequence(seed).spawn(k)]


def lattice_samples(region, k: int, prime: int, seed=0, workers=None) -> list[DiscrepancySample]:
    vol = region.volume
    if not vol > 1:
        raise ValueError(f"region volume must exceed 1, got {vol}")

    def one(s):
        L = sample_lattice(region.n, prime, np.random.default_rng(s))
        c = region.count(L)
        return DiscrepancySample(s, c, vol, abs(c - vol))

    return ordered_map(one, lattice_seeds(seed, k), workers)


def second_moment_experiment(region, k: int, prime: int, seed=0, workers=None) -> MomentReport:
    """Mean nonzero-point count and mean squared discrepancy over ``k`` random lattices."""
    if k < 2:
        raise ValueError("need k >= 2 lattices")
    samples = lattice_samples(region, k, prime, seed, workers)
    vol = samples[0].volume
    counts = np.array([s.count for s in samples], dtype=float)
    discs = np.array([s.disc for s in samples])
    msd = float(np.mean(discs**2))
    return MomentReport(k_samples=k, mean_count=float(counts.mean()), mean_sq_disc=msd,
                        vol=vol, ratio=msd / vol, prime=prime, samples=samples)


def exceedance_from_samples(samples, T: float) -> tuple[float, float]:
    """Fraction of samples with disc >= T and its binomial standard error."""
    k = len(samples)
    frac = sum(1 for s in samples if s.disc >= T) / k
    return frac, math.sqrt(frac * (1 - frac) / k)


def exceedance_fraction(region, T: float, k: int, prime: int, seed=0, workers=None) -> float:
    """Sampled proxy for the measure of ``{Λ : D(Λ, A) >= T}``."""
    if T < 0:
        raise ValueError("T must be non-negative")
    if k < 1:
        raise ValueError("k must be >= 1")
    return exceedance_from_samples(lattice_samples(region, k, prime, seed, workers), T)[0]


@dataclass(frozen=True)
class InterpolationResult:
    holds: bool
    slack: float
    disc_inner: float
    disc_mid: float
    disc_outer: float
    vol_diff: float
    vol_stderr: float


def interpolation_check(F: PolyForm, inner, mid, outer, vol_mode: str = "monte_carlo",
                        samples: int = 1_000_000, seed=0, workers=None,
                        stderr_mult: float = 3.0) -> InterpolationResult:
    """Check ``D(A) <= max(D(A1), D(A2)) + vol(A2 \\ A1)`` for nested form regions.

    Each region is ``(interval, t)`` meaning ``F^-1(interval) ∩ B_t``. Monte Carlo
    volumes share one sample so their differences are consistent.
    """
    regions = [(I, float(t)) for I, t in (inner, mid, outer)]
    (I1, t1), (Im, tm), (I2, t2) = regions
    if not (I2.contains_interval(Im) and Im.contains_interval(I1) and t1 <= tm <= t2):
        raise ValueError("regions are not nested: need inner ⊆ mid ⊆ outer")
    if vol_mode not in VOL_MODES:
        raise ValueError(f"vol_mode must be one of {VOL_MODES}")
    counts = [r.count for r in count_many(F, regions, workers)]
    if vol_mode == "predicted":
        vols = [predicted_volume(F, I, t) if t > 0 else 0.0 for I, t in regions]
        errs = [0.0, 0.0, 0.0]
    else:
        est = mc_volume_regions(F, regions, samples, seed, workers)
        vols = [e[0] for e in est]
        errs = [e[1] for e in est]
    d1, dm, d2 = (abs(c - v) for c, v in zip(counts, vols))
    vdiff = vols[2] - vols[0]
    slack = max(d1, d2) + vdiff - dm
    tol = stderr_mult * max(errs) + 1e-9 * max(1.0, abs(vols[2]))
    return InterpolationResult(slack >= -tol, slack, d1, dm, d2, vdiff, max(errs))
