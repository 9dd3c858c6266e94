"""Forms ``F = g.F0``, intervals, shrinking families and the symmetric matrix norm.

``F0(v) = v_1^d + ... + v_p^d - v_{p+1}^d - ... - v_n^d`` and the group acts on
row vectors, ``(g.F0)(v) = F0(v g)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Integral, Rational

import numpy as np
from scipy.linalg import expm

DET_TOL = 1e-9


def dim_symmetric_space(n: int) -> int:
    """Real dimension of SL_n(R)/SO(n), i.e. ``(n+2)(n-1)/2``."""
    return (n + 2) * (n - 1) // 2


@dataclass(frozen=True)
class Signature:
    p: int
    q: int
    d: int = 2

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValueError(f"need p, q >= 1, got p={self.p}, q={self.q}")
        if self.d < 2 or self.d % 2:
            raise ValueError(f"degree must be even and >= 2, got d={self.d}")
        if self.p + self.q <= self.d:
            raise ValueError(f"need n = p + q > d, got n={self.p + self.q}, d={self.d}")

    @property
    def n(self) -> int:
        return self.p + self.q

    @property
    def signs(self) -> np.ndarray:
        return np.array([1] * self.p + [-1] * self.q, dtype=np.int64)


@dataclass(frozen=True)
class Interval:
    """Half-open interval ``[lo, hi)``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"interval needs lo <= hi, got [{self.lo}, {self.hi})")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def __contains__(self, x) -> bool:
        return self.lo <= x < self.hi

    def contains_interval(self, other: "Interval") -> bool:
        if other.length == 0:
            return True
        return self.lo <= other.lo and other.hi <= self.hi

    def negated(self) -> "Interval":
        return Interval(-self.hi, -self.lo)


@dataclass(frozen=True)
class ShrinkingFamily:
    """Intervals of length ``c t^-kappa`` centred at ``xi``."""

    xi: float
    c: float
    kappa: float

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("scale c must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")

    def interval_at(self, t: float) -> Interval:
        return shrinking_interval(self, t)


def shrinking_interval(fam: ShrinkingFamily, t: float) -> Interval:
    if t <= 0:
        raise ValueError("t must be positive")
    half = 0.5 * fam.c * t ** (-fam.kappa)
    return Interval(fam.xi - half, fam.xi + half)


def _is_exact_vector(v) -> bool:
    if isinstance(v, np.ndarray):
        return v.dtype.kind in "iu" or (
            v.dtype == object and all(isinstance(x, Rational) for x in v.ravel())
        )
    return all(isinstance(x, Rational) for x in v)


def eval_f0(sig, v):
    """Evaluate ``F0`` at ``v``; integer or rational input is evaluated exactly.

    ``sig`` is a Signature or a bare ``(p, q, d)`` tuple; the polynomial itself
    does not need ``n > d``.
    """
    p, q, d = (sig.p, sig.q, sig.d) if isinstance(sig, Signature) else (int(x) for x in sig)
    if len(v) != p + q:
        raise ValueError(f"vector has length {len(v)}, expected {p + q}")
    if _is_exact_vector(v):
        vals = [x if isinstance(x, Fraction) else int(x) for x in v]
        plus = sum(x**d for x in vals[:p])
        minus = sum(x**d for x in vals[p:])
        return plus - minus
    w = np.asarray(v, dtype=float)
    return math.fsum(list(w[:p] ** d) + list(-(w[p:] ** d)))


class PolyForm:
    """The form ``g.F0`` for a determinant-one matrix ``g``.

    ``exact`` optionally holds ``g`` as a tuple of rows of Fractions; when present,
    integer evaluation and lattice counting run on exact integers.
    """

    def __init__(self, sig: Signature, g, exact=None):
        n = sig.n
        g = np.array(g, dtype=float)
        if g.shape != (n, n):
            raise ValueError(f"g has shape {g.shape}, expected {(n, n)}")
        if exact is not None:
            exact = tuple(tuple(Fraction(x) for x in row) for row in exact)
            if _exact_det(exact) != 1:
                raise ValueError("exact matrix does not have determinant one")
        det = np.linalg.det(g)
        if abs(det - 1.0) > DET_TOL:
            raise ValueError(f"det(g) = {det!r}, expected 1 within {DET_TOL}")
        g_inv = np.linalg.inv(g)
        if np.max(np.abs(g @ g_inv - np.eye(n))) > DET_TOL:
            raise ValueError("g is too badly conditioned to invert reliably")
        g.setflags(write=False)
        g_inv.setflags(write=False)
        self.sig = sig
        self.g = g
        self.g_inv = g_inv
        self.exact = exact
        self.cf_cache = None

    @property
    def n(self) -> int:
        return self.sig.n

    @classmethod
    def identity(cls, sig: Signature) -> "PolyForm":
        n = sig.n
        return cls(sig, np.eye(n), exact=[[int(i == j) for j in range(n)] for i in range(n)])

    @classmethod
    def from_rational(cls, sig: Signature, rows) -> "PolyForm":
        rows = [[Fraction(x) for x in row] for row in rows]
        return cls(sig, [[float(x) for x in row] for row in rows], exact=rows)

    @classmethod
    def random(cls, sig: Signature, rng: np.random.Generator, eps: float = 0.3) -> "PolyForm":
        """``g = exp(eps X)`` for Gaussian trace-zero ``X``, rescaled to det 1."""
        n = sig.n
        x = rng.standard_normal((n, n))
        x -= np.trace(x) / n * np.eye(n)
        g = expm(eps * x)
        g /= np.linalg.det(g) ** (1.0 / n)
        return cls(sig, g)

    @classmethod
    def random_rational(cls, sig: Signature, rng: np.random.Generator,
                        steps: int = 4, max_den: int = 3, max_num: int = 2) -> "PolyForm":
        """Product of random rational elementary matrices (exactly det 1)."""
        n = sig.n
        m = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
        for _ in range(steps):
            i, j = rng.choice(n, size=2, replace=False)
            num = int(rng.integers(-max_num, max_num + 1))
            den = int(rng.integers(1, max_den + 1))
            r = Fraction(num, den)
            # row operation: row_i += r * row_j
            m[i] = [a + r * b for a, b in zip(m[i], m[j])]
        return cls.from_rational(sig, m)

    def integer_matrix(self):
        """``(G, D)`` with ``g = G / D`` and integer ``G``, or ``None`` if inexact."""
        if self.exact is None:
            return None
        den = 1
        for row in self.exact:
            for x in row:
                den = den * x.denominator // math.gcd(den, x.denominator)
        G = [[int(x * den) for x in row] for row in self.exact]
        return G, den

    def __call__(self, v):
        return eval_form(self, v)

    def to_json(self) -> dict:
        out = {"p": self.sig.p, "q": self.sig.q, "d": self.sig.d,
               "g": [float(x) for x in self.g.ravel()]}
        if self.exact is not None:
            flat = [x for row in self.exact for x in row]
            out["g_num"] = [x.numerator for x in flat]
            out["g_den"] = [x.denominator for x in flat]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PolyForm":
        sig = Signature(int(obj["p"]), int(obj["q"]), int(obj.get("d", 2)))
        n = sig.n
        if "g_num" in obj:
            num = obj["g_num"]
            den = obj.get("g_den", 1)
            if isinstance(den, Integral):
                den = [den] * len(num)
            if len(num) != n * n or len(den) != n * n:
                raise ValueError("g_num/g_den must have n*n entries")
            flat = [Fraction(int(a), int(b)) for a, b in zip(num, den)]
            return cls.from_rational(sig, [flat[i * n:(i + 1) * n] for i in range(n)])
        if "g" not in obj:
            return cls.identity(sig)
        g = np.asarray(obj["g"], dtype=float)
        if g.size != n * n:
            raise ValueError("g must have n*n entries")
        return cls(sig, g.reshape(n, n))

    def form_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __repr__(self):
        kind = "exact" if self.exact is not None else "float"
        return f"PolyForm(p={self.sig.p}, q={self.sig.q}, d={self.sig.d}, {kind})"


def _exact_det(rows) -> Fraction:
    m = [list(r) for r in rows]
    n = len(m)
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if m[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            det = -det
        det *= m[c][c]
        for r in range(c + 1, n):
            f = m[r][c] / m[c][c]
            if f:
                m[r] = [a - f * b for a, b in zip(m[r], m[c])]
    return det


def eval_form(F: PolyForm, v):
    """``F0(v g)``.

    Exact (int or Fraction) when ``v`` is integral and ``F`` carries an exact
    matrix; otherwise double precision with compensated sums.
    """
    n = F.n
    if len(v) != n:
        raise ValueError(f"vector has length {len(v)}, expected {n}")
    if F.exact is not None and _is_exact_vector(v):
        vv = [Fraction(x) if not isinstance(x, Fraction) else x for x in v]
        w = [sum(vv[i] * F.exact[i][j] for i in range(n)) for j in range(n)]
        val = eval_f0(F.sig, w)
        return int(val) if val.denominator == 1 else val
    vf = np.asarray(v, dtype=float)
    w = [math.fsum(vf * F.g[:, j]) for j in range(n)]
    return eval_f0(F.sig, np.array(w))


def _power_norm(a: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    ata = a.T @ a
    x = np.random.default_rng(12345).standard_normal(a.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = ata @ x
        new = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    return math.sqrt(lam)


def matrix_norm(g) -> float:
    """``max(||g||_op, ||g^-1||_op)`` with spectral operator norms."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("matrix_norm needs a square matrix")
    try:
        g_inv = np.linalg.inv(g)
    except np.linalg.LinAlgError:
        raise ValueError("matrix is singular") from None
    if not np.all(np.isfinite(g_inv)):
        raise ValueError("matrix is singular")
    return max(_power_norm(g), _power_norm(g_inv))


def in_norm_ball(g, eps: float) -> bool:
    """Membership in ``{g : ||g|| < 1 + eps}``.

    For members, ``B_{(1-eps)t} subset B_t g subset B_{(1+eps)t}``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    return matrix_norm(g) < 1.0 + eps
