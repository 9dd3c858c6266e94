"""Desk-scale drivers: fixed shrinking targets, uniform interval sweeps, sup-min values."""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import stats

from formcount.forms import Interval, PolyForm, ShrinkingFamily, Signature, matrix_norm
from formcount.geometry import compute_cf
from formcount.lattice import collect_values, count_many, histogram


@dataclass
class ExperimentConfig:
    """Run configuration; keys match the CLI flags one-to-one."""

    p: int = 3
    q: int = 2
    d: int = 2
    identity: bool = False
    g: list | None = None           # explicit row-major matrix
    g_seed: int | None = None       # random g = exp(epsilon X), renormalized
    epsilon: float = 0.3
    kappa: float = 1.0
    c: float = 2.0
    xi: float = 0.0
    eta: float = 0.0
    n_cap: float = 1.0
    kappa_prime: float | None = None
    t_grid: list = field(default_factory=lambda: [20.0, 40.0, 60.0, 80.0])
    nu_claimed: float | None = None
    volume_samples: int = 1_000_000
    prime: int = 10007
    k_lattices: int = 200
    rng_seed: int = 0
    spot_checks: int = 20
    # single-query commands (count, histogram, volume, supmin, rogers)
    lo: float = -0.5
    hi: float = 0.5
    t: float | None = None
    width: float = 1.0
    dim: int = 3
    volumes: list = field(default_factory=lambda: [100.0])
    region: str = "ball"
    exceed_t: float | None = None

    @property
    def sig(self) -> Signature:
        return Signature(self.p, self.q, self.d)

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**obj)

    def __post_init__(self):
        # 20 and 20.0 must hash the same
        self.t_grid = [float(t) for t in self.t_grid]
        self.volumes = [float(v) for v in self.volumes]

    def to_json(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def form(self) -> PolyForm:
        sig = self.sig
        if self.g is not None:
            return PolyForm(sig, np.asarray(self.g, dtype=float).reshape(sig.n, sig.n))
        if self.g_seed is not None and not self.identity:
            return PolyForm.random(sig, np.random.default_rng(self.g_seed), self.epsilon)
        return PolyForm.identity(sig)

    def validate_grid(self):
        if not self.t_grid:
            raise ValueError("t_grid is empty")
        if any(t <= 0 for t in self.t_grid):
            raise ValueError("t_grid must be positive")
        if any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])):
            raise ValueError("t_grid must be strictly increasing")

    def validate_fixed(self):
        self.validate_grid()
        n, d = self.sig.n, self.d
        if not 0 <= self.kappa < n - d:
            raise ValueError(f"need 0 <= kappa < n - d = {n - d}")
        if self.c <= 0:
            raise ValueError("c must be positive")

    def validate_uniform(self):
        self.validate_grid()
        n, d = self.sig.n, self.d
        if not 0 <= self.eta < min(d, n - d):
            raise ValueError(f"need 0 <= eta < min(d, n - d) = {min(d, n - d)}")
        if not 0 <= self.kappa < (n - d - self.eta) / 2:
            raise ValueError(f"need 0 <= kappa < (n - d - eta)/2 = {(n - d - self.eta) / 2}")
        if self.n_cap <= 0:
            raise ValueError("n_cap must be positive")
        if self.kappa_prime is not None and self.kappa_prime < self.kappa:
            raise ValueError("kappa_prime must be >= kappa")


# --- fixed shrinking target ---------------------------------------------------

@dataclass
class SeriesPoint:
    t: float
    lo: float
    hi: float
    count: int
    prediction: float
    abs_error: float
    normalized_error: float
    exists: bool
    error: str | None = None

    COLUMNS = ("t", "lo", "hi", "count", "prediction", "abs_error", "normalized_error",
               "exists", "error")


def fixed_target_run(cfg: ExperimentConfig, F: PolyForm | None = None,
                     workers=None) -> list[SeriesPoint]:
    """Counts in ``I_t = [xi - c t^-k / 2, xi + c t^-k / 2)`` against ``c_F |I_t| t^(n-d)``."""
    cfg.validate_fixed()
    F = F if F is not None else cfg.form()
    fam = ShrinkingFamily(cfg.xi, cfg.c, cfg.kappa)
    n, d = F.n, F.sig.d
    cf = F.cf_cache if F.cf_cache is not None else compute_cf(F, cfg.volume_samples,
                                                              cfg.rng_seed, workers)
    queries = [(fam.interval_at(t), t) for t in cfg.t_grid]
    try:
        reports = count_many(F, queries, workers)
        errors = [None] * len(queries)
    except (FloatingPointError, OverflowError, ValueError):
        # retry per t so one bad radius does not sink the whole series
        reports, errors = [], []
        for q in queries:
            try:
                reports.append(count_many(F, [q], workers)[0])
                errors.append(None)
            except (FloatingPointError, OverflowError, ValueError) as exc:
                reports.append(None)
                errors.append(f"{type(exc).__name__}: {exc}")
    out = []
    for (I, t), rep, err in zip(queries, reports, errors):
        pred = cf.value * I.length * t ** (n - d)
        scale = t ** (n - d - cfg.kappa)
        if rep is None:
            out.append(SeriesPoint(t, I.lo, I.hi, -1, pred, math.nan, math.nan, False, err))
            continue
        ae = abs(rep.count - pred)
        out.append(SeriesPoint(t, I.lo, I.hi, rep.count, pred, ae, ae / scale,
                               rep.count >= 1))
    return out


# --- uniform sweep over intervals ---------------------------------------------

@dataclass
class UniformPoint:
    t: float
    N: float
    window_len: float
    width: float
    buckets_per_window: int
    windows: int
    worst_lo: float
    worst_hi: float
    worst_count: int
    worst_prediction: float
    worst_rel_error: float
    min_count: int

    COLUMNS = ("t", "N", "window_len", "width", "buckets_per_window", "windows", "worst_lo",
               "worst_hi", "worst_count", "worst_prediction", "worst_rel_error", "min_count")


@dataclass
class SpotCheck:
    t: float
    lo: float
    hi: float
    window_sum: int
    direct: int

    @property
    def agrees(self) -> bool:
        return self.window_sum == self.direct


@dataclass
class UniformReport:
    points: list
    spot_checks: list
    cf: float
    histograms: dict = field(default_factory=dict, repr=False)

    @property
    def worst(self) -> UniformPoint:
        return max(self.points, key=lambda p: p.worst_rel_error)


def n_of_t(cfg: ExperimentConfig, t: float) -> float:
    """``N(t) = min(n_cap, t^eta)``; ``eta = 0`` means the constant ``n_cap``."""
    return min(cfg.n_cap, t ** cfg.eta) if cfg.eta > 0 else cfg.n_cap


def window_layout(t: float, cfg: ExperimentConfig):
    """``(N, window length, bucket width, buckets per window)`` at radius ``t``."""
    N = n_of_t(cfg, t)
    L = t ** (-cfg.kappa)
    kp = cfg.kappa_prime if cfg.kappa_prime is not None else cfg.kappa + 0.5
    M = max(1, math.ceil(t ** (kp - cfg.kappa) - 1e-9))
    return N, L, L / M, M


def uniform_target_run(cfg: ExperimentConfig, F: PolyForm | None = None, workers=None,
                       spot_checks: int | None = None, keep_histograms: bool = False) -> UniformReport:
    """Worst relative error over all bucket-aligned windows of length ``t^-kappa`` in ``[-N, N)``.

    One histogram of width ``t^-kappa'`` per t; windows are sums of consecutive buckets.
    """
    cfg.validate_uniform()
    F = F if F is not None else cfg.form()
    n, d = F.n, F.sig.d
    cf = F.cf_cache if F.cf_cache is not None else compute_cf(F, cfg.volume_samples,
                                                              cfg.rng_seed, workers)
    nspot = cfg.spot_checks if spot_checks is None else spot_checks
    rng = np.random.default_rng(cfg.rng_seed)
    points, checks, hists = [], [], {}
    for t in cfg.t_grid:
        N, L, width, M = window_layout(t, cfg)
        h = histogram(F, t, Interval(-N, N), width, workers)
        edges = h.edges
        # windows must lie inside [-N, N)
        nb = int(np.searchsorted(edges, N * (1 + 1e-12), side="right") - 1)
        nwin = nb - M + 1
        if nwin < 1:
            raise ValueError(f"no window of length {L} fits in [-{N}, {N}) at t={t}")
        csum = np.concatenate([[0], np.cumsum(h.buckets)])
        counts = csum[M:M + nwin] - csum[:nwin]
        lens = edges[M:M + nwin] - edges[:nwin]
        preds = cf.value * lens * t ** (n - d)
        rel = np.abs(counts - preds) / preds
        k = int(np.argmax(rel))
        points.append(UniformPoint(t, N, L, width, M, nwin, float(edges[k]), float(edges[k + M]),
                                   int(counts[k]), float(preds[k]), float(rel[k]),
                                   int(counts.min())))
        if nspot > 0:
            picks = sorted(rng.choice(nwin, size=min(nspot, nwin), replace=False).tolist())
            direct = count_many(F, [(h.window(i, i + M), t) for i in picks], workers)
            checks += [SpotCheck(t, h.edge(i), h.edge(i + M), int(counts[i]), r.count)
                       for i, r in zip(picks, direct)]
        if keep_histograms:
            hists[t] = h
    return UniformReport(points, checks, cf.value, hists)


# --- sup-min ------------------------------------------------------------------

@dataclass(frozen=True)
class SupminResult:
    supmin: float
    argmax_xi: float
    finite: bool
    margin: float
    values: int


def _value_bound(F: PolyForm, t: float) -> float:
    # |F(v)| <= sum |w_i|^d <= ||w||_2^d with w = v g
    return (matrix_norm(F.g) * t) ** F.sig.d


def supmin_from_values(vals: np.ndarray, N: float):
    """``max over xi in [-N, N]`` of the distance to the nearest value, and a maximizer."""
    u = np.unique(np.asarray(vals, dtype=float))
    if u.size == 0:
        return math.inf, 0.0
    cand = np.concatenate([[-N], np.clip((u[:-1] + u[1:]) / 2, -N, N), [N]])
    idx = np.clip(np.searchsorted(u, cand), 1, u.size - 1) if u.size > 1 else np.zeros(len(cand), int)
    if u.size > 1:
        dist = np.minimum(np.abs(cand - u[idx - 1]), np.abs(cand - u[idx]))
    else:
        dist = np.abs(cand - u[0])
    k = int(np.argmax(dist))
    return float(dist[k]), float(cand[k])


def supmin_run(F: PolyForm, t: float, N: float, workers=None, exclude_origin: bool = False,
               margin: float | None = None) -> SupminResult:
    """``sup_{|xi| <= N} min_{||v|| <= t} |F(v) - xi|``.

    The collection window ``[-N - m, N + m]`` starts from ``m = margin`` (default
    ``max(1, N)``) and doubles until values exist on both sides of ``[-N, N]`` or the
    window covers every value the ball can produce. Returns +inf when nothing is found.
    """
    if t <= 0 or N <= 0:
        raise ValueError("need t > 0 and N > 0")
    bound = _value_bound(F, t)
    m = max(1.0, N) if margin is None else float(margin)
    while True:
        vals, norms = collect_values(F, t, -N - m, N + m, workers)
        if exclude_origin:
            vals = vals[norms != 0]
        complete = N + m >= bound
        if complete or (vals.size and vals.min() <= -N and vals.max() >= N):
            break
        m *= 2.0
    if vals.size == 0:
        return SupminResult(math.inf, 0.0, False, m, 0)
    s, xi = supmin_from_values(vals, N)
    return SupminResult(s, xi, True, m, int(np.unique(vals).size))


# --- fitting and output -------------------------------------------------------

def fit_exponent(series) -> tuple[float, float]:
    """Least-squares slope of ``log e`` against ``log t`` and its r^2."""
    series = list(series)
    if len(series) < 3:
        raise ValueError("need at least 3 points")
    t = np.array([s[0] for s in series], dtype=float)
    e = np.array([s[1] for s in series], dtype=float)
    if np.any(t <= 0) or np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("t and e must be positive and finite")
    lt, le = np.log(t), np.log(e)
    if np.ptp(le) == 0:
        return 0.0, 1.0
    res = stats.linregress(lt, le)
    return float(res.slope), float(res.rvalue ** 2)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def rows_csv(rows, columns, header: list[str] | None = None) -> str:
    """CSV with optional ``#`` comment lines; floats use repr for exact round trips."""
    buf = io.StringIO()
    for line in header or []:
        buf.write(line if line.startswith("#") else "# " + line)
        buf.write("\n")
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(getattr(r, c)) for c in columns) + "\n")
    return buf.getvalue()
