"""Integer points in balls, interval counts, histograms and random unimodular lattices."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numba
import numpy as np

from formcount import _kernels as K
from formcount._parallel import resolve_workers
from formcount.forms import Interval, PolyForm, Signature

log = logging.getLogger(__name__)

TAU = 1e-9
_MAX_GROUPS = 64
_INT_LIMIT = 2**62


@dataclass
class CountReport:
    count: int
    t: float
    interval: Interval
    points_enumerated: int
    boundary_cases: int
    exact: bool = False


@dataclass
class Histogram:
    range: Interval
    width: float
    buckets: np.ndarray
    edges: np.ndarray
    overflow_lo: int
    overflow_hi: int
    boundary_flags: int
    points_enumerated: int
    t: float = 0.0
    tau: float = TAU
    form_hash: str = ""
    exact: bool = False

    def edge(self, i: int) -> float:
        return float(self.edges[i])

    def window(self, i: int, j: int) -> Interval:
        """Interval covered by buckets ``i..j-1``."""
        return Interval(self.edge(i), self.edge(j))

    def window_count(self, i: int, j: int) -> int:
        return int(self.buckets[i:j].sum())

    def in_range(self) -> int:
        return int(self.buckets.sum())

    def coarsen(self, factor: int) -> "Histogram":
        """Merge each run of ``factor`` adjacent buckets; needs ``factor | len(buckets)``."""
        B = len(self.buckets)
        if factor < 1 or B % factor:
            raise ValueError("factor must divide the bucket count")
        return Histogram(
            range=self.range, width=self.width * factor,
            buckets=self.buckets.reshape(-1, factor).sum(axis=1),
            edges=self.edges[::factor].copy(), overflow_lo=self.overflow_lo,
            overflow_hi=self.overflow_hi, boundary_flags=self.boundary_flags,
            points_enumerated=self.points_enumerated, t=self.t, tau=self.tau,
            form_hash=self.form_hash, exact=self.exact)

    def to_csv(self, seed=None, manifest: str | None = None) -> str:
        buf = io.StringIO()
        if manifest:
            buf.write(manifest + "\n")
        buf.write(f"# t={float(self.t)!r},form_hash={self.form_hash},width={float(self.width)!r},"
                  f"tau={self.tau!r},seed={seed},overflow_lo={self.overflow_lo},"
                  f"overflow_hi={self.overflow_hi},boundary_flags={self.boundary_flags},"
                  f"points={self.points_enumerated}\n")
        buf.write("bucket_lo,bucket_hi,count\n")
        for i, c in enumerate(self.buckets):
            buf.write(f"{float(self.edges[i])!r},{float(self.edges[i + 1])!r},{int(c)}\n")
        return buf.getvalue()


@dataclass
class LatticeBasis:
    """Row basis of ``Λ = Z^n rows``; ``exact`` optionally holds Fraction rows."""

    rows: np.ndarray
    exact: tuple | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def covolume(self) -> float:
        return abs(float(np.linalg.det(self.rows)))

    @classmethod
    def identity(cls, n: int) -> "LatticeBasis":
        return cls(np.eye(n), exact=tuple(tuple(Fraction(int(i == j)) for j in range(n))
                                          for i in range(n)))

    @classmethod
    def from_form(cls, F: PolyForm) -> "LatticeBasis":
        """The lattice ``Z^n g`` of a form."""
        return cls(np.array(F.g), exact=F.exact)


# --- ball walking ----------------------------------------------------------

def radius_sq_floor(t: float) -> int:
    """``floor(t^2)`` computed exactly."""
    if t < 0:
        raise ValueError("radius must be non-negative")
    return math.floor(Fraction(t) ** 2)


def _slabs(n: int, T2: int):
    m = math.isqrt(T2)
    sz, sa = [], []
    for z in range(n - 1):
        for a in range(1, m + 1):
            sz.append(z)
            sa.append(a)
    sz.append(n - 1)
    sa.append(0)
    sz = np.array(sz, dtype=np.int64)
    sa = np.array(sa, dtype=np.int64)
    groups = np.linspace(0, len(sz), min(len(sz), _MAX_GROUPS) + 1).round().astype(np.int64)
    return sz, sa, groups


def _set_threads(workers):
    w = min(resolve_workers(workers), numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(max(1, w))


def ball_points(n: int, t: float, half: bool = False) -> np.ndarray:
    """All integer points with ``||v|| <= t`` in lexicographic order.

    With ``half=True`` only points whose first nonzero coordinate is positive.
    """
    T2 = radius_sq_floor(t)
    sz, sa, _ = _slabs(n, T2)
    total = K.count_points(n, T2, sz, sa)
    pts = K.ball_points(n, T2, sz, sa, total)
    if not half:
        pts = np.vstack([pts, -pts, np.zeros((1, n), dtype=np.int64)])
    order = np.lexsort(pts.T[::-1])
    return pts[order]


def enumerate_ball(n: int, t: float, visitor=None, half: bool = False) -> int:
    """Visit every integer point of the closed ball of radius ``t`` once.

    ``visitor`` is called with each point (an int64 array); exceptions it raises
    propagate. Returns the number of points visited.
    """
    if n < 1:
        raise ValueError("dimension must be >= 1")
    T2 = radius_sq_floor(t)
    if visitor is None:
        sz, sa, _ = _slabs(n, T2)
        h = int(K.count_points(n, T2, sz, sa))
        return h if half else 2 * h + 1
    pts = ball_points(n, t, half=half)
    for v in pts:
        visitor(v)
    return len(pts)


# --- form evaluation setup -------------------------------------------------

def _float_setup(F: PolyForm):
    signs = F.sig.signs.astype(np.float64)
    g = np.ascontiguousarray(F.g, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        # overflowing forms are reported point by point by the kernels
        M = g @ np.diag(signs) @ g.T
    return np.ascontiguousarray(M), g, signs


def _ceil_scaled(x: float, scale: int) -> int:
    if math.isinf(x):
        return _INT_LIMIT if x > 0 else -_INT_LIMIT
    val = math.ceil(Fraction(x) * scale)
    return max(-_INT_LIMIT, min(_INT_LIMIT, val))


def _int_setup(F: PolyForm, t: float):
    """Integer matrix and scale ``D^d`` if exact and int64-safe at radius ``t``."""
    im = F.integer_matrix()
    if im is None:
        return None
    G, D = im
    n, d = F.n, F.sig.d
    cols = [math.sqrt(sum(G[j][i] ** 2 for j in range(n))) for i in range(n)]
    bound = sum((t * c + 1) ** d for c in cols)
    scale = D**d
    if bound >= _INT_LIMIT / 4 or scale >= _INT_LIMIT:
        log.warning("integer path would overflow int64; using floating point")
        return None
    return np.array(G, dtype=np.int64), scale


def _raise_bad(bad, n):
    rows = np.nonzero(bad[:, 0])[0]
    if len(rows):
        v = bad[rows[0], 1:].tolist()
        raise FloatingPointError(f"non-finite form value at v={v}")


def count_many(F: PolyForm, queries, workers=None, exact: bool | None = None) -> list[CountReport]:
    """One enumeration pass answering several (interval, radius) queries.

    Uses exact integer arithmetic when the form carries a rational matrix
    (unless ``exact=False``).
    """
    queries = [(I, float(t)) for I, t in queries]
    if not queries:
        return []
    for _, t in queries:
        if t < 0:
            raise ValueError("radius must be non-negative")
    n, d = F.n, F.sig.d
    r2s = np.array([radius_sq_floor(t) for _, t in queries], dtype=np.int64)
    T2 = int(r2s.max())
    sz, sa, groups = _slabs(n, T2)
    _set_threads(workers)
    tmax = math.sqrt(T2)
    ints = _int_setup(F, tmax) if exact is not False else None
    if ints is not None:
        Gm, scale = ints
        los = np.array([_ceil_scaled(I.lo, scale) for I, _ in queries], dtype=np.int64)
        his = np.array([_ceil_scaled(I.hi, scale) for I, _ in queries], dtype=np.int64)
        counts, bnd, points = K.count_int(n, d, T2, sz, sa, groups, Gm, F.sig.signs,
                                          r2s, los, his,
                                          np.array([I.lo for I, _ in queries], dtype=np.float64),
                                          np.array([I.hi for I, _ in queries], dtype=np.float64),
                                          float(scale), TAU)
        origin_val = 0
        origin_hits = [los[j] <= origin_val < his[j] for j in range(len(queries))]
    else:
        M, g, signs = _float_setup(F)
        los = np.array([I.lo for I, _ in queries], dtype=np.float64)
        his = np.array([I.hi for I, _ in queries], dtype=np.float64)
        ends = np.concatenate([los, his])
        ends = ends[np.isfinite(ends)]
        band = 2 * TAU * max(1.0, float(np.abs(ends).max()) if len(ends) else 1.0)
        env_lo = float(los.min()) - band
        env_hi = float(his.max()) + band
        counts, bnd, points, bad = K.count_float(n, d, T2, sz, sa, groups, M, g, signs,
                                                 r2s, los, his, env_lo, env_hi, TAU)
        _raise_bad(bad, n)
        origin_hits = [I.lo <= 0.0 < I.hi for I, _ in queries]
    counts = counts.sum(axis=0)
    bnd = bnd.sum(axis=0)
    half_points = K.count_points(n, T2, sz, sa)
    out = []
    for j, (I, t) in enumerate(queries):
        if I.length == 0:
            out.append(CountReport(0, t, I, 0, 0, ints is not None))
            continue
        hp = K.count_points(n, int(r2s[j]), *_slabs(n, int(r2s[j]))[:2]) if r2s[j] != T2 else half_points
        origin_b = int(_near_py(0.0, I.lo) or _near_py(0.0, I.hi))
        out.append(CountReport(
            count=int(2 * counts[j] + origin_hits[j]), t=t, interval=I,
            points_enumerated=int(2 * hp + 1),
            boundary_cases=int(2 * bnd[j] + origin_b), exact=ints is not None))
    return out


def _near_py(F, e, tau=TAU):
    return abs(F - e) < tau * max(1.0, abs(F))


def count_in_interval(F: PolyForm, I: Interval, t: float, workers=None,
                      exact: bool | None = None) -> CountReport:
    """``#{v in Z^n : F(v) in I, ||v|| <= t}``; the origin counts when ``0 in I``."""
    return count_many(F, [(I, t)], workers, exact)[0]


def histogram(F: PolyForm, t: float, range: Interval, width: float, workers=None,
              exact: bool | None = None) -> Histogram:
    """Bucket F-values over the ball of radius ``t``.

    Bucket ``i`` is ``[edges[i], edges[i+1])`` with ``edges[i] = range.lo + i*width``
    and there are ``ceil(|range|/width)`` buckets.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    if t < 0:
        raise ValueError("radius must be non-negative")
    B = max(1, math.ceil(range.length / width))
    edges = range.lo + np.arange(B + 1, dtype=np.float64) * width
    n, d = F.n, F.sig.d
    T2 = radius_sq_floor(t)
    sz, sa, groups = _slabs(n, T2)
    _set_threads(workers)
    ints = _int_setup(F, math.sqrt(T2)) if exact is not False else None
    if ints is not None:
        Gm, scale = ints
        iedges = np.array([_ceil_scaled(e, scale) for e in edges], dtype=np.int64)
        hist, under, over, flags, points = K.hist_int(n, d, T2, sz, sa, groups, Gm,
                                                      F.sig.signs, iedges, edges,
                                                      float(scale), TAU)
        zero_idx = int(np.searchsorted(iedges, 0, side="right") - 1)
    else:
        M, g, signs = _float_setup(F)
        band = 2 * TAU * max(1.0, abs(edges[0]), abs(edges[-1]))
        hist, under, over, flags, points, bad = K.hist_float(n, d, T2, sz, sa, groups, M, g,
                                                             signs, edges, width, TAU,
                                                             edges[0] - band, edges[-1] + band)
        _raise_bad(bad, n)
        zero_idx = int(np.searchsorted(edges, 0.0, side="right") - 1)
    buckets = 2 * hist.sum(axis=0)
    under = 2 * int(under.sum())
    over = 2 * int(over.sum())
    flags = 2 * int(flags.sum())
    # the origin, F = 0
    if zero_idx < 0:
        under += 1
    elif zero_idx >= B:
        over += 1
    else:
        buckets[zero_idx] += 1
    flags += int(np.any(np.abs(edges) < TAU))
    return Histogram(range=range, width=width, buckets=buckets, edges=edges,
                     overflow_lo=under, overflow_hi=over, boundary_flags=flags,
                     points_enumerated=2 * int(points.sum()) + 1, t=float(t),
                     form_hash=F.form_hash(), exact=ints is not None)


def collect_values(F: PolyForm, t: float, wlo: float, whi: float, workers=None):
    """F-values in ``[wlo, whi]`` over the half-space of the ball plus the origin.

    Returns ``(values, norms_sq)``; each nonzero point stands for itself and its
    negation, which has the same value.
    """
    n, d = F.n, F.sig.d
    T2 = radius_sq_floor(t)
    sz, sa, groups = _slabs(n, T2)
    _set_threads(workers)
    M, g, signs = _float_setup(F)
    per_group = K.count_window_float(n, d, T2, sz, sa, groups, M, g, signs, wlo, whi)
    offsets = np.concatenate([[0], np.cumsum(per_group)[:-1]]).astype(np.int64)
    vals, norms = K.collect_float(n, d, T2, sz, sa, groups, M, g, signs, wlo, whi,
                                  offsets, int(per_group.sum()))
    if wlo <= 0.0 <= whi:
        vals = np.append(vals, 0.0)
        norms = np.append(norms, 0)
    return vals, norms


# --- random unimodular lattices -------------------------------------------

def is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p % 2 == 0:
        return p == 2
    f = 3
    while f * f <= p:
        if p % f == 0:
            return False
        f += 2
    return True


def goldstein_mayer(n: int, prime: int, a) -> LatticeBasis:
    """``prime^(-1/n) B`` with rows ``e_i + a_i e_n`` (i < n) and ``prime e_n``."""
    if not is_prime(int(prime)):
        raise ValueError(f"{prime} is not prime")
    a = [int(x) for x in a]
    if len(a) != n - 1:
        raise ValueError(f"need n-1 = {n - 1} residues, got {len(a)}")
    if any(x < 0 or x >= prime for x in a):
        raise ValueError("residues must lie in [0, prime)")
    B = np.eye(n, dtype=np.int64)
    B[: n - 1, n - 1] = a
    B[n - 1, n - 1] = prime
    s = float(prime) ** (-1.0 / n)
    return LatticeBasis(B * s, meta={"prime": int(prime), "a": a, "int_rows": B, "scale": s})


def sample_lattice(n: int, prime: int, rng: np.random.Generator) -> LatticeBasis:
    a = rng.integers(0, prime, size=n - 1)
    return goldstein_mayer(n, prime, a)


def _exact_inverse(rows):
    n = len(rows)
    m = [list(map(Fraction, r)) + [Fraction(int(i == j)) for j in range(n)]
         for i, r in enumerate(rows)]
    for c in range(n):
        piv = next((r for r in range(c, n) if m[r][c] != 0), None)
        if piv is None:
            raise ValueError("matrix is singular")
        m[c], m[piv] = m[piv], m[c]
        inv = 1 / m[c][c]
        m[c] = [x * inv for x in m[c]]
        for r in range(n):
            if r != c and m[r][c] != 0:
                f = m[r][c]
                m[r] = [a - f * b for a, b in zip(m[r], m[c])]
    return [row[n:] for row in m]


def _exact_matmul(a, b):
    n = len(a)
    return [[sum(a[i][k] * b[k][j] for k in range(n)) for j in range(n)] for i in range(n)]


def _common_den(rows):
    den = 1
    for row in rows:
        for x in row:
            den = den * x.denominator // math.gcd(den, x.denominator)
    return den


def _region_matrix(h, n):
    if h is None:
        eye = np.eye(n)
        return eye, tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))
    if isinstance(h, PolyForm):
        return np.array(h.g), h.exact
    if isinstance(h, LatticeBasis):
        return h.rows, h.exact
    arr = np.asarray(h)
    if arr.dtype == object:
        ex = tuple(tuple(Fraction(x) for x in row) for row in h)
        return np.array([[float(x) for x in row] for row in ex]), ex
    return arr.astype(float), None


def count_lattice_in_region(L: LatticeBasis, interval: Interval | None, sig: Signature | None,
                            t: float, h=None, siegel: bool = False) -> int:
    """Points of ``Λ = Z^n L`` in ``F0^-1(I) ∩ B_t h``.

    ``interval=None`` drops the form condition (plain ellipsoid ``B_t h``).
    ``siegel=True`` excludes the origin. Runs on exact integers when ``L`` and
    ``h`` are rational.
    """
    if t < 0:
        raise ValueError("radius must be non-negative")
    n = L.n
    use_form = interval is not None
    if use_form and sig is None:
        raise ValueError("a form condition needs a signature")
    if use_form and interval.length == 0:
        return 0
    d = sig.d if sig is not None else 2
    signs = (sig.signs if sig is not None else np.ones(n, dtype=np.int64))
    h_float, h_exact = _region_matrix(h, n)
    slack = 1e-9
    if L.exact is not None and h_exact is not None:
        Kx = _exact_matmul(L.exact, _exact_inverse(h_exact))
        E = _common_den(Kx)
        P = [[int(x * E) for x in row] for row in Kx]
        DL = _common_den(L.exact)
        Lm = [[int(x * DL) for x in row] for row in L.exact]
        thr = math.floor(Fraction(t) ** 2 * E * E)
        scale = DL**d
        cols = [math.sqrt(sum(Lm[j][i] ** 2 for j in range(n))) for i in range(n)]
        kf = np.array([[float(x) for x in row] for row in Kx])
        mmax = t * np.abs(np.linalg.inv(kf)).sum(axis=0).max() + 2
        bound = sum((mmax * c) ** d for c in cols)
        if bound < _INT_LIMIT / 4 and thr < _INT_LIMIT:
            R = np.linalg.qr(kf.T, mode="r")
            lo = _ceil_scaled(interval.lo, scale) if use_form else 0
            hi = _ceil_scaled(interval.hi, scale) if use_form else 0
            return int(K._fp_walk_int(R, np.array(P, dtype=np.int64),
                                      np.array(Lm, dtype=np.int64), signs.astype(np.int64),
                                      d, thr, lo, hi, use_form, siegel, slack, float(t) ** 2))
        log.warning("exact lattice path would overflow int64; using floating point")
    kf = L.rows @ np.linalg.inv(h_float)
    R = np.linalg.qr(kf.T, mode="r")
    lo = interval.lo if use_form else 0.0
    hi = interval.hi if use_form else 0.0
    return int(K._fp_walk_float(R, np.ascontiguousarray(kf), np.ascontiguousarray(L.rows),
                                signs.astype(np.float64), d, float(t) ** 2, lo, hi,
                                use_form, siegel, slack))
