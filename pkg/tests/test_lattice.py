import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from formcount.forms import Interval, PolyForm, Signature, eval_form
from formcount.lattice import (LatticeBasis, ball_points, count_in_interval, count_lattice_in_region,
                               count_many, enumerate_ball, goldstein_mayer, histogram, is_prime,
                               radius_sq_floor, sample_lattice)


def box_points(n, t):
    m = int(math.floor(t))
    pts = np.array(list(itertools.product(range(-m, m + 1), repeat=n)), dtype=np.int64)
    return pts[np.sum(pts**2, axis=1) <= t * t]


def brute_count(F, I, t):
    """Exact count by evaluating every point of the bounding box."""
    return sum(1 for v in box_points(F.n, t) if I.lo <= eval_form(F, [int(x) for x in v]) < I.hi)


def test_enumerate_ball_examples():
    assert enumerate_ball(3, 2) == 33
    assert enumerate_ball(3, 0) == 1
    assert enumerate_ball(2, 1) == 5
    assert enumerate_ball(3, 2, half=True) == 16


@given(st.integers(1, 4), st.floats(0, 10))
def test_enumerate_ball_complete(n, t):
    if n == 4:
        t = min(t, 6.5)
    pts = ball_points(n, t)
    box = box_points(n, t)
    assert enumerate_ball(n, t) == len(box) == len(pts)
    assert {tuple(v) for v in pts} == {tuple(v) for v in box}


def test_enumerate_ball_visitor_and_half():
    seen = []
    assert enumerate_ball(3, 3, visitor=lambda v: seen.append(tuple(v)), half=True) == len(seen)
    assert len(set(seen)) == len(seen)
    assert all(next(x for x in v if x) > 0 for v in seen)

    def stop(v):
        raise StopIteration("abort")

    with pytest.raises(StopIteration):
        enumerate_ball(2, 3, visitor=stop)


def test_radius_sq_floor():
    assert radius_sq_floor(2) == 4 and radius_sq_floor(math.sqrt(2)) in (1, 2)
    assert radius_sq_floor(0.1 + 0.2) == 0
    assert radius_sq_floor(1e8 + 0.5) == 10**16 + 10**8


def test_count_examples():
    F = PolyForm.identity(Signature(2, 1))
    I = Interval(-0.5, 0.5)
    for exact in (True, False):
        assert count_in_interval(F, I, 2, exact=exact).count == 9
        assert count_in_interval(F, I, 1, exact=exact).count == 1
        assert count_in_interval(F, Interval(0.2, 0.2), 5, exact=exact).count == 0
    rep = count_in_interval(F, I, 2)
    assert rep.exact and rep.points_enumerated == 33 and rep.count <= rep.points_enumerated


@given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 1, 2), (2, 2, 2), (1, 3, 2), (4, 1, 4)]),
       st.floats(0, 7), st.floats(-30, 30), st.floats(0, 30))
def test_count_matches_brute_force(seed, pqd, t, lo, width):
    rng = np.random.default_rng(seed)
    sig = Signature(*pqd)
    F = PolyForm.random_rational(sig, rng)
    I = Interval(lo, lo + width)
    expect = brute_count(F, I, t)
    assert count_in_interval(F, I, t, exact=True).count == expect
    if pqd[2] == 2:
        # rational forms hit endpoints exactly; float rounding may move those flagged points
        rep = count_in_interval(F, I, t, exact=False)
        assert abs(rep.count - expect) <= rep.boundary_cases


@given(st.integers(0, 2**32 - 1), st.floats(0, 6), st.floats(-20, 20), st.floats(0, 20))
def test_float_count_matches_brute_force(seed, t, lo, width):
    F = PolyForm.random(Signature(2, 2), np.random.default_rng(seed))
    I = Interval(lo, lo + width)
    vals = [eval_form(F, v) for v in box_points(4, t)]
    expect = sum(lo <= x < lo + width for x in vals)
    rep = count_in_interval(F, I, t)
    # points within the tolerance band of an endpoint may fall either way
    assert abs(rep.count - expect) <= rep.boundary_cases


def test_half_space_symmetry(rng):
    F = PolyForm.random_rational(Signature(3, 1), rng)
    pts = ball_points(4, 4, half=True)
    I = Interval(-3, 7)
    half = sum(I.lo <= eval_form(F, [int(x) for x in v]) < I.hi for v in pts)
    assert count_in_interval(F, I, 4).count == 2 * half + 1


def test_count_many_matches_single(rng):
    F = PolyForm.random(Signature(3, 2), rng)
    qs = [(Interval(-1, 1), 6.0), (Interval(0, 5), 9.5), (Interval(-4, -3.5), 3.0)]
    many = count_many(F, qs)
    for (I, t), rep in zip(qs, many):
        assert rep.count == count_in_interval(F, I, t).count
        assert rep.t == t and rep.interval == I


def test_overflow_names_point():
    sig = Signature(2, 1)
    F = PolyForm(sig, np.diag([1e200, 1e-200, 1.0]))
    with pytest.raises(FloatingPointError, match=r"v=\["):
        count_in_interval(F, Interval(-1, 1), 3)


def test_histogram_example():
    F = PolyForm.identity(Signature(2, 1))
    for exact in (True, False):
        h = histogram(F, 1, Interval(-2, 2), 1, exact=exact)
        assert h.buckets.tolist() == [0, 2, 1, 4]
        assert h.in_range() + h.overflow_lo + h.overflow_hi == h.points_enumerated == 7


def test_histogram_bucket_count():
    F = PolyForm.identity(Signature(2, 2))
    h = histogram(F, 3, Interval(-1, 1), 0.3)
    assert len(h.buckets) == math.ceil(2 / 0.3)


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_histogram_partition_and_coarsening(seed, rational):
    rng = np.random.default_rng(seed)
    sig = Signature(3, 2)
    F = PolyForm.random_rational(sig, rng) if rational else PolyForm.random(sig, rng)
    fine = histogram(F, 6, Interval(-8, 8), 0.25)
    coarse = histogram(F, 6, Interval(-8, 8), 1.0)
    assert fine.in_range() + fine.overflow_lo + fine.overflow_hi == fine.points_enumerated
    assert np.array_equal(fine.coarsen(4).buckets, coarse.buckets)
    with pytest.raises(ValueError):
        fine.coarsen(3)


def test_histogram_windows_equal_counts(rng):
    for rational in (True, False):
        F = (PolyForm.random_rational if rational else PolyForm.random)(Signature(3, 2), rng)
        h = histogram(F, 9, Interval(-3, 3), 0.07)
        B = len(h.buckets)
        for _ in range(50):
            i, j = sorted(rng.choice(B + 1, size=2, replace=False))
            assert h.window_count(i, j) == count_in_interval(F, h.window(i, j), 9).count


def test_histogram_csv():
    F = PolyForm.identity(Signature(2, 1))
    text = histogram(F, 1, Interval(-2, 2), 1).to_csv(seed=5, manifest="# m")
    lines = text.splitlines()
    assert lines[0] == "# m" and lines[1].startswith("# t=1.0,form_hash=")
    assert "seed=5" in lines[1] and "tau=1e-09" in lines[1]
    assert lines[2] == "bucket_lo,bucket_hi,count"
    assert lines[3:] == ["-2.0,-1.0,0", "-1.0,0.0,2", "0.0,1.0,1", "1.0,2.0,4"]


def test_parallel_determinism(rng):
    F = PolyForm.random(Signature(3, 2), rng)
    I = Interval(-2, 2)
    ref = count_in_interval(F, I, 12, workers=1)
    hist = histogram(F, 12, Interval(-5, 5), 0.1, workers=1)
    for w in (2, 8):
        assert count_in_interval(F, I, 12, workers=w) == ref
        assert np.array_equal(histogram(F, 12, Interval(-5, 5), 0.1, workers=w).buckets,
                              hist.buckets)


def test_goldstein_mayer_examples():
    L = goldstein_mayer(3, 2, [0, 0])
    s = 2 ** (-1 / 3)
    assert np.allclose(L.rows, s * np.diag([1, 1, 2]))
    assert abs(L.covolume - 1) <= 1e-12
    L = goldstein_mayer(3, 2, [1, 1])
    assert round(np.linalg.det(L.meta["int_rows"])) == 2
    with pytest.raises(ValueError):
        goldstein_mayer(3, 10, [1, 1])
    with pytest.raises(ValueError):
        goldstein_mayer(3, 7, [7, 1])


def test_is_prime():
    assert [p for p in range(30) if is_prime(p)] == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert is_prime(10007) and not is_prime(10007 * 3)


def test_sample_lattice(rng):
    a = sample_lattice(4, 1009, np.random.default_rng(4))
    b = sample_lattice(4, 1009, np.random.default_rng(4))
    assert np.array_equal(a.rows, b.rows)
    for _ in range(50):
        L = sample_lattice(int(rng.integers(2, 6)), 10007, rng)
        assert abs(L.covolume - 1) <= 1e-9


def test_region_count_identity_with_form_lattice(rng):
    for _ in range(25):
        sig = [Signature(2, 1), Signature(2, 2), Signature(3, 1)][int(rng.integers(3))]
        F = PolyForm.random_rational(sig, rng)
        t = float(rng.uniform(1, 9))
        lo = float(rng.uniform(-10, 10))
        I = Interval(lo, lo + float(rng.uniform(0, 10)))
        expect = count_in_interval(F, I, t).count
        L = LatticeBasis.from_form(F)
        assert count_lattice_in_region(L, I, sig, t, h=F) == expect
        # float path on the same lattice
        Lf = LatticeBasis(np.array(F.g))
        assert count_lattice_in_region(Lf, I, sig, t, h=np.array(F.g)) == expect


def test_region_count_zero_radius():
    sig = Signature(2, 1)
    L = LatticeBasis.identity(3)
    assert count_lattice_in_region(L, Interval(1, 2), sig, 0.0) == 0
    assert count_lattice_in_region(L, Interval(-1, 1), sig, 0.0) == 1
    assert count_lattice_in_region(L, Interval(-1, 1), sig, 0.0, siegel=True) == 0


def test_region_count_ball_brute_force(rng):
    # lattice points of a Goldstein-Mayer lattice in a Euclidean ball, by box search
    for _ in range(10):
        L = sample_lattice(3, 101, rng)
        r = float(rng.uniform(0.5, 3))
        bnd = [int(math.ceil(r * np.linalg.norm(np.linalg.inv(L.rows)[:, j]))) + 1 for j in range(3)]
        m = np.array(list(itertools.product(*[range(-b, b + 1) for b in bnd])))
        v = m @ L.rows
        expect = int(np.sum(np.sum(v * v, axis=1) <= r * r)) - 1
        assert count_lattice_in_region(L, None, None, r, siegel=True) == expect
