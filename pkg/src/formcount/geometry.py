"""Cone measures on l^d spheres, the leading constant c_F and volume estimates.

With polar coordinates ``dv = r^{k-1} dr dω`` on R^k (ω on the unit l^d sphere),
the cone measure has total mass ``k vol(B_d^k)``. Integrating the radial part of
the unit-ball indicator analytically gives

    c_F = mass_p mass_q / (d (n-d)) * E[ ||(ω1 + ω2) g^-1||_2^{-(n-d)} ]

for independent cone-uniform ω1 on S_d^{p-1} and ω2 on S_d^{q-1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from formcount._parallel import ordered_map, substreams
from formcount.forms import Interval, PolyForm

CHUNK = 1 << 17
DEFAULT_CF_SAMPLES = 1_000_000


@dataclass(frozen=True)
class CfEstimate:
    value: float
    stderr: float
    samples: int
    seed: int | None = None

    def to_json(self) -> dict:
        return {"value": self.value, "stderr": self.stderr,
                "samples": self.samples, "seed": self.seed}


def sphere_mass(k: int, d: int) -> float:
    """Total cone-measure mass of the unit l^d sphere in R^k."""
    if k < 1 or d < 2 or d % 2:
        raise ValueError("need k >= 1 and even d >= 2")
    return k * math.exp(k * math.log(2.0 * math.gamma(1.0 + 1.0 / d)) - math.lgamma(1.0 + k / d))


def ball_volume(n: int, radius: float = 1.0) -> float:
    """Euclidean ball volume in R^n."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * radius**n


def sample_cone_batch(k: int, d: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` cone-uniform points on the unit l^d sphere of R^k, shape (size, k)."""
    if k < 1 or d < 2 or d % 2:
        raise ValueError("need k >= 1 and even d >= 2")
    # |x|^d ~ Gamma(1/d) for density proportional to exp(-|x|^d)
    mag = rng.gamma(1.0 / d, size=(size, k)) ** (1.0 / d)
    sign = np.where(rng.random((size, k)) < 0.5, -1.0, 1.0)
    x = mag * sign
    norm = np.sum(np.abs(x) ** d, axis=1) ** (1.0 / d)
    return x / norm[:, None]


def sample_cone(k: int, d: int, rng: np.random.Generator) -> np.ndarray:
    return sample_cone_batch(k, d, 1, rng)[0]


def _chunks(samples: int):
    full, rest = divmod(samples, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _seed_value(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else None


def _cf_chunk(F: PolyForm, size: int, rng: np.random.Generator):
    sig = F.sig
    w1 = sample_cone_batch(sig.p, sig.d, size, rng)
    w2 = sample_cone_batch(sig.q, sig.d, size, rng)
    y = np.hstack([w1, w2]) @ F.g_inv
    vals = np.linalg.norm(y, axis=1) ** (-(sig.n - sig.d))
    if not np.all(np.isfinite(vals)):
        raise RuntimeError("non-finite c_F integrand; g is numerically singular")
    # shifted sums keep the variance stable when the integrand is nearly constant
    shift = vals[0]
    dv = vals - shift
    return size, float(vals.sum()), float(dv.sum()), float(dv @ dv), shift


def compute_cf(F: PolyForm, samples: int = DEFAULT_CF_SAMPLES, seed=0, workers=None) -> CfEstimate:
    """Monte Carlo estimate of c_F; also stored on ``F.cf_cache``."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    sizes = _chunks(samples)
    rngs = substreams(seed, len(sizes))
    parts = ordered_map(lambda a: _cf_chunk(F, *a), zip(sizes, rngs), workers)
    total = sum(p[1] for p in parts)
    mean = total / samples
    # pooled variance from per-chunk shifted moments
    ss = 0.0
    for size, s, sd, sdd, shift in parts:
        cm = s / size
        ss += sdd - sd * sd / size + size * (cm - mean) ** 2
    var = max(ss, 0.0) / max(samples - 1, 1)
    sig = F.sig
    scale = sphere_mass(sig.p, sig.d) * sphere_mass(sig.q, sig.d) / (sig.d * (sig.n - sig.d))
    est = CfEstimate(value=scale * mean, stderr=scale * math.sqrt(var / samples),
                     samples=samples, seed=_seed_value(seed))
    F.cf_cache = est
    return est


def cf_closed_form_d2_identity(p: int, q: int) -> float:
    """c_F for d = 2 and g = identity, where ||ω1 + ω2|| = sqrt(2) identically."""
    n = p + q
    return sphere_mass(p, 2) * sphere_mass(q, 2) * 2.0 ** (-(n - 2) / 2) / (2 * (n - 2))


def predicted_volume(F: PolyForm, I: Interval, T: float) -> float:
    """Leading term ``c_F |I| T^(n-d)``; computes c_F with defaults when not cached."""
    if T <= 0:
        raise ValueError("T must be positive")
    if I.length == 0:
        return 0.0
    cf = F.cf_cache if F.cf_cache is not None else compute_cf(F)
    return cf.value * I.length * T ** (F.n - F.sig.d)


def form_values(F: PolyForm, v: np.ndarray) -> np.ndarray:
    """Vectorised float evaluation of F on the rows of ``v``."""
    w = v @ F.g
    return np.sum(F.sig.signs * w**F.sig.d, axis=1)


def _ball_points(n: int, T: float, size: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal((size, n))
    x /= np.linalg.norm(x, axis=1)[:, None]
    r = T * rng.random(size) ** (1.0 / n)
    return x * r[:, None]


def _regions_chunk(F, regions, T, size, rng):
    v = _ball_points(F.n, T, size, rng)
    vals = form_values(F, v)
    r2 = np.einsum("ij,ij->i", v, v)
    hits = []
    for I, t in regions:
        mask = (vals >= I.lo) & (vals < I.hi)
        if t < T:
            mask &= r2 <= t * t
        hits.append(int(np.count_nonzero(mask)))
    return hits


def mc_volume_regions(F: PolyForm, regions, samples: int, seed=0, workers=None):
    """Common-sample volume estimates of ``F^-1(I) ∩ B_t`` for each (I, t) in ``regions``.

    All regions share one uniform sample of the largest ball, so nested regions
    get nested estimates. Returns a list of (estimate, stderr).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    regions = [(I, float(t)) for I, t in regions]
    T = max(t for _, t in regions)
    if T <= 0:
        raise ValueError("radius must be positive")
    sizes = _chunks(samples)
    rngs = substreams(seed, len(sizes))
    parts = ordered_map(lambda a: _regions_chunk(F, regions, T, *a), zip(sizes, rngs), workers)
    vol = ball_volume(F.n, T)
    out = []
    for j, (I, _) in enumerate(regions):
        if I.length == 0:
            out.append((0.0, 0.0))
            continue
        frac = sum(p[j] for p in parts) / samples
        out.append((vol * frac, vol * math.sqrt(frac * (1 - frac) / samples)))
    return out


def mc_volume(F: PolyForm, I: Interval, T: float, samples: int, seed=0, workers=None):
    """Uniform-ball Monte Carlo estimate of ``vol(F^-1(I) ∩ B_T)`` and its stderr."""
    if T <= 0:
        raise ValueError("T must be positive")
    if I.length == 0:
        return 0.0, 0.0
    return mc_volume_regions(F, [(I, T)], samples, seed, workers)[0]
