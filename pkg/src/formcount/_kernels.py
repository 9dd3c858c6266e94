"""Numba kernels for exhaustive enumeration of integer points in Euclidean balls.

The ball ``sum v_i^2 <= T2`` (``T2`` an integer) is walked in half-space order:
points whose first nonzero coordinate is positive. The half-space is split into
slabs ``(z, a)``: coordinates ``0..z-1`` are zero and coordinate ``z`` equals
``a >= 1``. Slab ``(n-1, 0)`` is the positive half of the last axis. Inside a slab
an odometer runs over coordinates ``z+1..n-2`` and the last coordinate is swept as
a line ``k = -m..m``. Kernels take contiguous groups of slabs and return per-group
results; callers sum them in group order.
"""

import numba
import numpy as np
from numba import njit, prange

# TBB in this image is too old for numba; OpenMP is safe for concurrent callers
numba.config.THREADING_LAYER = "omp"


@njit(cache=True)
def isqrt(x):
    if x < 0:
        return -1
    r = np.int64(np.sqrt(np.float64(x)))
    while r * r > x:
        r -= 1
    while (r + 1) * (r + 1) <= x:
        r += 1
    return r


@njit(cache=True)
def _reset(v, part, bnd, j0, j1, T2):
    for j in range(j0, j1 + 1):
        m = isqrt(T2 - part[j])
        bnd[j] = m
        v[j] = -m
        part[j + 1] = part[j] + m * m


@njit(cache=True)
def _advance(v, part, bnd, j0, j1, T2):
    j = j1
    while j >= j0:
        if v[j] < bnd[j]:
            v[j] += 1
            part[j + 1] = part[j] + v[j] * v[j]
            _reset(v, part, bnd, j + 1, j1, T2)
            return True
        j -= 1
    return False


@njit(cache=True)
def _slab_start(n, z, a, T2, v, part, bnd):
    """Initialise prefix state for slab (z, a); returns False when the slab is empty."""
    for j in range(n):
        v[j] = 0
    for j in range(n + 1):
        part[j] = 0
    if z == n - 1:
        return True
    v[z] = a
    for j in range(z + 1, n + 1):
        part[j] = a * a
    if a * a > T2:
        return False
    _reset(v, part, bnd, z + 1, n - 2, T2)
    return True


@njit(cache=True)
def _line_range(n, z, T2, part):
    m = isqrt(T2 - part[n - 1])
    if z == n - 1:
        return 1, m
    return -m, m


@njit(cache=True)
def _pow_even(x, d):
    x2 = x * x
    r = x2
    for _ in range(d // 2 - 1):
        r *= x2
    return r


@njit(cache=True)
def _line_coeffs_quadratic(n, v, M):
    # F(prefix + k e_{n-1}) = (a k + b) k + c
    c = 0.0
    b = 0.0
    for i in range(n - 1):
        row = 0.0
        for j in range(n - 1):
            row += M[i, j] * v[j]
        c += v[i] * row
        b += v[i] * M[i, n - 1]
    return M[n - 1, n - 1], 2.0 * b, c


@njit(cache=True)
def _eval_line_float(n, d, v, k, M, g, signs, w0):
    """Float F at prefix + k e_{n-1}; w0 must hold prefix @ g for d > 2."""
    x = np.float64(k)
    if d == 2:
        a, b, c = _line_coeffs_quadratic(n, v, M)
        return (a * x + b) * x + c
    s = 0.0
    for i in range(n):
        s += signs[i] * _pow_even(w0[i] + x * g[n - 1, i], d)
    return s


@njit(cache=True)
def _prefix_w(n, v, g, w0):
    for i in range(n):
        acc = 0.0
        for j in range(n - 1):
            acc += v[j] * g[j, i]
        w0[i] = acc


@njit(cache=True)
def _near(F, e, tau):
    return abs(F - e) < tau * max(1.0, abs(F))


@njit(cache=True)
def _scan(n, d, k0, k1, a, b, c, w0, g, signs, lo, hi):
    """Branch-free pass over a line: (#F < lo, #lo <= F < hi)."""
    below = 0
    inside = 0
    if d == 2:
        for k in range(k0, k1 + 1):
            x = np.float64(k)
            F = (a * x + b) * x + c
            below += np.int64(F < lo)
            inside += np.int64(F >= lo) & np.int64(F < hi)
    else:
        for k in range(k0, k1 + 1):
            x = np.float64(k)
            F = 0.0
            for i in range(n):
                F += signs[i] * _pow_even(w0[i] + x * g[n - 1, i], d)
            below += np.int64(F < lo)
            inside += np.int64(F >= lo) & np.int64(F < hi)
    return below, inside


@njit(cache=True)
def _line_may_overflow(n, d, km, a, b, c, w0, g):
    """True unless every F on the line is provably finite."""
    if d == 2:
        bound = abs(a) * km * km + abs(b) * km + abs(c)
    else:
        bound = 0.0
        for i in range(n):
            bound += _pow_even(abs(w0[i]) + km * abs(g[n - 1, i]), d)
    return not bound < 1e300


@njit(parallel=True, cache=True)
def count_float(n, d, T2, sz, sa, groups, M, g, signs, r2s, los, his,
                env_lo, env_hi, tau):
    """Counts and boundary cases for each query (r2s[j], [los[j], his[j])).

    Returns (counts[G, J], boundary[G, J], points[G], bad[G, n+1]).
    """
    G = groups.shape[0] - 1
    J = r2s.shape[0]
    counts = np.zeros((G, J), dtype=np.int64)
    bnd_out = np.zeros((G, J), dtype=np.int64)
    points = np.zeros(G, dtype=np.int64)
    bad = np.zeros((G, n + 1), dtype=np.int64)
    for gi in prange(G):
        v = np.zeros(n, dtype=np.int64)
        part = np.zeros(n + 1, dtype=np.int64)
        bnd = np.zeros(n, dtype=np.int64)
        w0 = np.zeros(n, dtype=np.float64)
        for s in range(groups[gi], groups[gi + 1]):
            z = sz[s]
            if not _slab_start(n, z, sa[s], T2, v, part, bnd):
                continue
            while True:
                k0, k1 = _line_range(n, z, T2, part)
                base = part[n - 1]
                if d == 2:
                    a, b, c = _line_coeffs_quadratic(n, v, M)
                else:
                    _prefix_w(n, v, g, w0)
                    a = 0.0
                    b = 0.0
                    c = 0.0
                _, inside = _scan(n, d, k0, k1, a, b, c, w0, g, signs, env_lo, env_hi)
                for k in range(k0, k1 + 1):
                    if inside == 0:
                        break
                    F = _eval_line_float(n, d, v, k, M, g, signs, w0)
                    if F >= env_lo and F < env_hi:
                        r2 = base + k * k
                        for j in range(J):
                            if r2 <= r2s[j]:
                                if F >= los[j] and F < his[j]:
                                    counts[gi, j] += 1
                                if _near(F, los[j], tau) or _near(F, his[j], tau):
                                    bnd_out[gi, j] += 1
                if k1 >= k0:
                    points[gi] += k1 - k0 + 1
                if bad[gi, 0] == 0 and _line_may_overflow(n, d, max(abs(k0), abs(k1)), a, b, c, w0, g):
                    for k in range(k0, k1 + 1):
                        F = _eval_line_float(n, d, v, k, M, g, signs, w0)
                        if not np.isfinite(F):
                            bad[gi, 0] = 1
                            for i in range(n):
                                bad[gi, 1 + i] = v[i]
                            bad[gi, n] = k
                            break
                if z == n - 1 or not _advance(v, part, bnd, z + 1, n - 2, T2):
                    break
    return counts, bnd_out, points, bad


@njit(cache=True)
def _bucket(F, edges, width):
    B = edges.shape[0] - 1
    b = np.int64((F - edges[0]) / width)
    if b < 0:
        b = 0
    if b > B - 1:
        b = B - 1
    while b > 0 and F < edges[b]:
        b -= 1
    while b < B - 1 and F >= edges[b + 1]:
        b += 1
    return b


@njit(parallel=True, cache=True)
def hist_float(n, d, T2, sz, sa, groups, M, g, signs, edges, width, tau, band_lo, band_hi):
    """Histogram over ``edges`` (B+1 increasing values).

    Points outside ``[band_lo, band_hi)`` (a widening of the edge range) are
    tallied branch-free; the rest are binned individually.
    Returns (hist[G, B], under[G], over[G], boundary[G], points[G], bad[G, n+1]).
    """
    G = groups.shape[0] - 1
    B = edges.shape[0] - 1
    lo = edges[0]
    hi = edges[B]
    hist = np.zeros((G, B), dtype=np.int64)
    under = np.zeros(G, dtype=np.int64)
    over = np.zeros(G, dtype=np.int64)
    flags = np.zeros(G, dtype=np.int64)
    points = np.zeros(G, dtype=np.int64)
    bad = np.zeros((G, n + 1), dtype=np.int64)
    for gi in prange(G):
        v = np.zeros(n, dtype=np.int64)
        part = np.zeros(n + 1, dtype=np.int64)
        bnd = np.zeros(n, dtype=np.int64)
        w0 = np.zeros(n, dtype=np.float64)
        for s in range(groups[gi], groups[gi + 1]):
            z = sz[s]
            if not _slab_start(n, z, sa[s], T2, v, part, bnd):
                continue
            while True:
                k0, k1 = _line_range(n, z, T2, part)
                if d == 2:
                    a, b, c = _line_coeffs_quadratic(n, v, M)
                else:
                    _prefix_w(n, v, g, w0)
                    a = 0.0
                    b = 0.0
                    c = 0.0
                below, inside = _scan(n, d, k0, k1, a, b, c, w0, g, signs, band_lo, band_hi)
                under[gi] += below
                if k1 >= k0:
                    over[gi] += k1 - k0 + 1 - below - inside
                for k in range(k0, k1 + 1):
                    if inside == 0:
                        break
                    F = _eval_line_float(n, d, v, k, M, g, signs, w0)
                    if F < band_lo or F >= band_hi:
                        continue
                    if F < lo:
                        under[gi] += 1
                        if _near(F, lo, tau):
                            flags[gi] += 1
                    elif F >= hi:
                        over[gi] += 1
                        if _near(F, hi, tau):
                            flags[gi] += 1
                    else:
                        bk = _bucket(F, edges, width)
                        hist[gi, bk] += 1
                        if _near(F, edges[bk], tau) or _near(F, edges[bk + 1], tau):
                            flags[gi] += 1
                if k1 >= k0:
                    points[gi] += k1 - k0 + 1
                if bad[gi, 0] == 0 and _line_may_overflow(n, d, max(abs(k0), abs(k1)), a, b, c, w0, g):
                    for k in range(k0, k1 + 1):
                        F = _eval_line_float(n, d, v, k, M, g, signs, w0)
                        if not np.isfinite(F):
                            bad[gi, 0] = 1
                            for i in range(n):
                                bad[gi, 1 + i] = v[i]
                            bad[gi, n] = k
                            break
                if z == n - 1 or not _advance(v, part, bnd, z + 1, n - 2, T2):
                    break
    return hist, under, over, flags, points, bad


@njit(parallel=True, cache=True)
def collect_float(n, d, T2, sz, sa, groups, M, g, signs, wlo, whi, offsets, total):
    """Values F in [wlo, whi] and their squared norms, in slab order.

    ``offsets[gi]`` is the first output index of group ``gi`` (from a counting pass).
    """
    G = groups.shape[0] - 1
    vals = np.empty(total, dtype=np.float64)
    norms = np.empty(total, dtype=np.int64)
    for gi in prange(G):
        v = np.zeros(n, dtype=np.int64)
        part = np.zeros(n + 1, dtype=np.int64)
        bnd = np.zeros(n, dtype=np.int64)
        w0 = np.zeros(n, dtype=np.float64)
        pos = offsets[gi]
        for s in range(groups[gi], groups[gi + 1]):
            z = sz[s]
            if not _slab_start(n, z, sa[s], T2, v, part, bnd):
                continue
            while True:
                k0, k1 = _line_range(n, z, T2, part)
                if d != 2:
                    _prefix_w(n, v, g, w0)
                for k in range(k0, k1 + 1):
                    F = _eval_line_float(n, d, v, k, M, g, signs, w0)
                    if F >= wlo and F <= whi:
                        vals[pos] = F
                        norms[pos] = part[n - 1] + k * k
                        pos += 1
                if z == n - 1 or not _advance(v, part, bnd, z + 1, n - 2, T2):
                    break
    return vals, norms


@njit(parallel=True, cache=True)
def count_window_float(n, d, T2, sz, sa, groups, M, g, signs, wlo, whi):
    G = groups.shape[0] - 1
    counts = np.zeros(G, dtype=np.int64)
    for gi in prange(G):
        v = np.zeros(n, dtype=np.int64)
        part = np.zeros(n + 1, dtype=np.int64)
        bnd = np.zeros(n, dtype=np.int64)
        w0 = np.zeros(n, dtype=np.float64)
        for s in range(groups[gi], groups[gi + 1]):
            z = sz[s]
            if not _slab_start(n, z, sa[s], T2, v, part, bnd):
                continue
            while True:
                k0, k1 = _line_range(n, z, T2, part)
                if d != 2:
                    _prefix_w(n, v, g, w0)
                for k in range(k0, k1 + 1):
                    F = _eval_line_float(n, d, v, k, M, g, signs, w0)
                    if F >= wlo and F <= whi:
                        counts[gi] += 1
                if z == n - 1 or not _advance(v, part, bnd, z + 1, n - 2, T2):
                    break
    return counts


@njit(cache=True)
def _int_value(n, d, v, k, G, signs):
    F = np.int64(0)
    for i in range(n):
        w = np.int64(0)
        for j in range(n - 1):
            w += v[j] * G[j, i]
        w += k * G[n - 1, i]
        F += signs[i] * _pow_even(w, d)
    return F


@njit(parallel=True, cache=True)
def count_int(n, d, T2, sz, sa, groups, Gm, signs, r2s, los, his, flo, fhi, scale, tau):
    """Exact counts with integer form values ``N = F * scale`` and thresholds
    ``los[j] <= N < his[j]``; boundary bands use the float value ``N / scale``."""
    G = groups.shape[0] - 1
    J = r2s.shape[0]
    counts = np.zeros((G, J), dtype=np.int64)
    bnd_out = np.zeros((G, J), dtype=np.int64)
    points = np.zeros(G, dtype=np.int64)
    for gi in prange(G):
        v = np.zeros(n, dtype=np.int64)
        part = np.zeros(n + 1, dtype=np.int64)
        bnd = np.zeros(n, dtype=np.int64)
        w0 = np.zeros(n, dtype=np.int64)
        for s in range(groups[gi], groups[gi + 1]):
            z = sz[s]
            if not _slab_start(n, z, sa[s], T2, v, part, bnd):
                continue
            while True:
                k0, k1 = _line_range(n, z, T2, part)
                for i in range(n):
                    acc = np.int64(0)
                    for j in range(n - 1):
                        acc += v[j] * Gm[j, i]
                    w0[i] = acc
                for k in range(k0, k1 + 1):
                    N = np.int64(0)
                    for i in range(n):
                        N += signs[i] * _pow_even(w0[i] + k * Gm[n - 1, i], d)
                    r2 = part[n - 1] + k * k
                    Ff = N / scale
                    for j in range(J):
                        if r2 <= r2s[j]:
                            if N >= los[j] and N < his[j]:
                                counts[gi, j] += 1
                            if _near(Ff, flo[j], tau) or _near(Ff, fhi[j], tau):
                                bnd_out[gi, j] += 1
                if k1 >= k0:
                    points[gi] += k1 - k0 + 1
                if z == n - 1 or not _advance(v, part, bnd, z + 1, n - 2, T2):
                    break
    return counts, bnd_out, points


@njit(parallel=True, cache=True)
def hist_int(n, d, T2, sz, sa, groups, Gm, signs, iedges, fedges, scale, tau):
    """Exact histogram; bucket b holds iedges[b] <= N < iedges[b+1]."""
    G = groups.shape[0] - 1
    B = iedges.shape[0] - 1
    hist = np.zeros((G, B), dtype=np.int64)
    under = np.zeros(G, dtype=np.int64)
    over = np.zeros(G, dtype=np.int64)
    flags = np.zeros(G, dtype=np.int64)
    points = np.zeros(G, dtype=np.int64)
    for gi in prange(G):
        v = np.zeros(n, dtype=np.int64)
        part = np.zeros(n + 1, dtype=np.int64)
        bnd = np.zeros(n, dtype=np.int64)
        for s in range(groups[gi], groups[gi + 1]):
            z = sz[s]
            if not _slab_start(n, z, sa[s], T2, v, part, bnd):
                continue
            while True:
                k0, k1 = _line_range(n, z, T2, part)
                for k in range(k0, k1 + 1):
                    N = _int_value(n, d, v, k, Gm, signs)
                    Ff = N / scale
                    if N < iedges[0]:
                        under[gi] += 1
                        if _near(Ff, fedges[0], tau):
                            flags[gi] += 1
                    elif N >= iedges[B]:
                        over[gi] += 1
                        if _near(Ff, fedges[B], tau):
                            flags[gi] += 1
                    else:
                        bk = np.searchsorted(iedges, N, side="right") - 1
                        hist[gi, bk] += 1
                        if _near(Ff, fedges[bk], tau) or _near(Ff, fedges[bk + 1], tau):
                            flags[gi] += 1
                if k1 >= k0:
                    points[gi] += k1 - k0 + 1
                if z == n - 1 or not _advance(v, part, bnd, z + 1, n - 2, T2):
                    break
    return hist, under, over, flags, points


@njit(cache=True)
def ball_points(n, T2, sz, sa, total):
    """All half-space points of the ball, in walk order, shape (total, n)."""
    out = np.empty((total, n), dtype=np.int64)
    v = np.zeros(n, dtype=np.int64)
    part = np.zeros(n + 1, dtype=np.int64)
    bnd = np.zeros(n, dtype=np.int64)
    pos = 0
    for s in range(sz.shape[0]):
        z = sz[s]
        if not _slab_start(n, z, sa[s], T2, v, part, bnd):
            continue
        while True:
            k0, k1 = _line_range(n, z, T2, part)
            for k in range(k0, k1 + 1):
                for i in range(n - 1):
                    out[pos, i] = v[i]
                out[pos, n - 1] = k
                pos += 1
            if z == n - 1 or not _advance(v, part, bnd, z + 1, n - 2, T2):
                break
    return out


@njit(cache=True)
def count_points(n, T2, sz, sa):
    total = 0
    v = np.zeros(n, dtype=np.int64)
    part = np.zeros(n + 1, dtype=np.int64)
    bnd = np.zeros(n, dtype=np.int64)
    for s in range(sz.shape[0]):
        z = sz[s]
        if not _slab_start(n, z, sa[s], T2, v, part, bnd):
            continue
        while True:
            k0, k1 = _line_range(n, z, T2, part)
            if k1 >= k0:
                total += k1 - k0 + 1
            if z == n - 1 or not _advance(v, part, bnd, z + 1, n - 2, T2):
                break
    return total


# --- Fincke-Pohst enumeration of lattice points in an ellipsoid -------------

@njit(cache=True)
def _fp_walk_float(R, K, L, signs, d, t2, lo, hi, use_form, skip_origin, slack):
    """Count m with ||m K||^2 <= t2 and (if use_form) lo <= F0(m L) < hi.

    ``R`` is upper triangular with ||m K|| = ||R m||.
    """
    n = R.shape[0]
    m = np.zeros(n, dtype=np.int64)
    ub = np.zeros(n, dtype=np.int64)
    ctr = np.zeros(n, dtype=np.float64)
    rem = np.zeros(n + 1, dtype=np.float64)
    rem[n] = t2 * (1.0 + slack) + slack
    count = 0
    i = n - 1
    descend = True
    while True:
        if descend:
            c = 0.0
            for j in range(i + 1, n):
                c -= R[i, j] * m[j]
            c /= R[i, i]
            ctr[i] = c
            r = rem[i + 1]
            if r < 0.0:
                r = 0.0
            w = np.sqrt(r) / abs(R[i, i]) + slack
            m[i] = np.int64(np.ceil(c - w))
            ub[i] = np.int64(np.floor(c + w))
            descend = False
        if m[i] > ub[i]:
            i += 1
            if i == n:
                break
            m[i] += 1
            continue
        if i == 0:
            origin = True
            for j in range(n):
                if m[j] != 0:
                    origin = False
                    break
            if not (origin and skip_origin):
                nrm = 0.0
                for col in range(n):
                    x = 0.0
                    for j in range(n):
                        x += m[j] * K[j, col]
                    nrm += x * x
                if nrm <= t2:
                    if use_form:
                        F = 0.0
                        for col in range(n):
                            y = 0.0
                            for j in range(n):
                                y += m[j] * L[j, col]
                            F += signs[col] * _pow_even(y, d)
                        if F >= lo and F < hi:
                            count += 1
                    else:
                        count += 1
            m[0] += 1
            continue
        y = R[i, i] * (m[i] - ctr[i])
        rem[i] = rem[i + 1] - y * y
        i -= 1
        descend = True
    return count


@njit(cache=True)
def _fp_walk_int(R, P, Lm, signs, d, thr, lo, hi, use_form, skip_origin, slack, t2f):
    """Exact variant: ||m P||^2 <= thr and lo <= F0(m Lm) < hi on integers."""
    n = R.shape[0]
    m = np.zeros(n, dtype=np.int64)
    ub = np.zeros(n, dtype=np.int64)
    ctr = np.zeros(n, dtype=np.float64)
    rem = np.zeros(n + 1, dtype=np.float64)
    rem[n] = t2f * (1.0 + slack) + slack
    count = 0
    i = n - 1
    descend = True
    while True:
        if descend:
            c = 0.0
            for j in range(i + 1, n):
                c -= R[i, j] * m[j]
            c /= R[i, i]
            ctr[i] = c
            r = rem[i + 1]
            if r < 0.0:
                r = 0.0
            w = np.sqrt(r) / abs(R[i, i]) + slack
            m[i] = np.int64(np.ceil(c - w))
            ub[i] = np.int64(np.floor(c + w))
            descend = False
        if m[i] > ub[i]:
            i += 1
            if i == n:
                break
            m[i] += 1
            continue
        if i == 0:
            origin = True
            for j in range(n):
                if m[j] != 0:
                    origin = False
                    break
            if not (origin and skip_origin):
                nrm = np.int64(0)
                for col in range(n):
                    x = np.int64(0)
                    for j in range(n):
                        x += m[j] * P[j, col]
                    nrm += x * x
                if nrm <= thr:
                    if use_form:
                        F = np.int64(0)
                        for col in range(n):
                            y = np.int64(0)
                            for j in range(n):
                                y += m[j] * Lm[j, col]
                            F += signs[col] * _pow_even(y, d)
                        if F >= lo and F < hi:
                            count += 1
                    else:
                        count += 1
            m[0] += 1
            continue
        y = R[i, i] * (m[i] - ctr[i])
        rem[i] = rem[i + 1] - y * y
        i -= 1
        descend = True
    return count
