import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import ortho_group

from formcount.forms import (DET_TOL, Interval, PolyForm, ShrinkingFamily, Signature,
                             dim_symmetric_space, eval_f0, eval_form, in_norm_ball, matrix_norm,
                             shrinking_interval)


def test_signature_invariants():
    s = Signature(2, 1, 2)
    assert s.n == 3 and s.signs.tolist() == [1, 1, -1]
    for bad in [(0, 3, 2), (2, 0, 2), (2, 2, 3), (1, 1, 2), (2, 2, 4), (3, 2, 0)]:
        with pytest.raises(ValueError):
            Signature(*bad)


def test_dim_symmetric_space():
    assert dim_symmetric_space(3) == 5
    assert [dim_symmetric_space(n) for n in (2, 4, 5)] == [2, 9, 14]


def test_interval_half_open():
    I = Interval(-0.5, 0.5)
    assert -0.5 in I and 0.5 not in I and I.length == 1.0
    assert Interval(1, 1).length == 0 and 1 not in Interval(1, 1)
    with pytest.raises(ValueError):
        Interval(1, 0)
    assert I.negated() == Interval(-0.5, 0.5)
    assert Interval(-1, 1).contains_interval(I) and not I.contains_interval(Interval(-1, 0))


def test_eval_f0_examples():
    assert eval_f0(Signature(2, 1), (3, 4, 5)) == 0
    assert eval_f0((1, 1, 4), (2, 1)) == 15
    assert eval_f0(Signature(2, 1), (0, 0, 0)) == 0
    with pytest.raises(ValueError):
        eval_f0(Signature(2, 1), (1, 2))


def test_eval_f0_exact_on_large_integers():
    v = (10**12 + 1, 3, 10**12)
    # float would lose the low digits of the square
    assert eval_f0(Signature(2, 1), v) == (10**12 + 1) ** 2 + 9 - 10**24
    assert isinstance(eval_f0(Signature(2, 1), np.array(v, dtype=np.int64)), int)


def test_eval_form_examples():
    sig = Signature(2, 1)
    assert eval_form(PolyForm.identity(sig), (3, 1, 2)) == eval_f0(sig, (3, 1, 2))
    u = PolyForm.from_rational(sig, [[1, 0, 0], [1, 1, 0], [0, 0, 1]])
    assert eval_form(u, (1, 1, 1)) == 4
    uf = PolyForm(sig, np.array([[1, 0, 0], [1, 1, 0], [0, 0, 1]], dtype=float))
    assert eval_form(uf, (1, 1, 1)) == 4.0


def test_eval_form_even(rng):
    sig = Signature(3, 2, 2)
    for _ in range(20):
        F = PolyForm.random(sig, rng)
        v = rng.normal(size=(500, 5)) * 10
        for x in v:
            assert eval_form(F, -x) == eval_form(F, x)


@given(st.lists(st.integers(-50, 50), min_size=4, max_size=4), st.integers(0, 2**32 - 1))
def test_eval_form_exact_symmetry(v, seed):
    F = PolyForm.random_rational(Signature(2, 2), np.random.default_rng(seed))
    val = eval_form(F, v)
    assert val == eval_form(F, [-x for x in v])
    assert isinstance(val, (int, Fraction))
    # oracle: multiply out in Fractions directly
    w = [sum(Fraction(v[i]) * F.exact[i][j] for i in range(4)) for j in range(4)]
    assert val == w[0] ** 2 + w[1] ** 2 - w[2] ** 2 - w[3] ** 2


def test_polyform_det_enforced():
    sig = Signature(2, 1)
    with pytest.raises(ValueError):
        PolyForm(sig, np.diag([2.0, 1.0, 1.0]))
    PolyForm(sig, np.diag([1.0 + 0.5 * DET_TOL, 1.0, 1.0]))
    with pytest.raises(ValueError):
        PolyForm(sig, np.eye(2))
    with pytest.raises(ValueError):
        PolyForm.from_rational(sig, [[2, 0, 0], [0, 1, 0], [0, 0, 1]])


def test_polyform_immutable(rng):
    F = PolyForm.random(Signature(2, 1), rng)
    with pytest.raises(ValueError):
        F.g[0, 0] = 5.0
    assert np.allclose(F.g @ F.g_inv, np.eye(3), atol=DET_TOL)


def test_random_forms(rng):
    for _ in range(20):
        F = PolyForm.random(Signature(3, 2), rng, eps=0.3)
        assert abs(np.linalg.det(F.g) - 1) <= DET_TOL
        R = PolyForm.random_rational(Signature(3, 2), rng)
        G, D = R.integer_matrix()
        assert np.allclose(np.array(G) / D, R.g)


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_json_round_trip(seed, exact):
    rng = np.random.default_rng(seed)
    sig = Signature(2, 2)
    F = PolyForm.random_rational(sig, rng) if exact else PolyForm.random(sig, rng)
    G = PolyForm.from_json(json.loads(json.dumps(F.to_json())))
    assert np.array_equal(G.g, F.g) and G.exact == F.exact
    assert G.form_hash() == F.form_hash()


def test_json_scalar_denominator():
    F = PolyForm.from_json({"p": 2, "q": 1, "d": 2, "g_num": [2, 0, 0, 0, 1, 0, 0, 0, 4],
                            "g_den": 2})
    assert F.exact[0][0] == 1 and F.exact[2][2] == 2 and F.exact[1][1] == Fraction(1, 2)


def test_matrix_norm_examples():
    assert matrix_norm(np.eye(3)) == pytest.approx(1.0, rel=1e-10)
    assert matrix_norm(np.diag([2.0, 1.0, 0.5])) == pytest.approx(2.0, rel=1e-10)
    k = ortho_group.rvs(4, random_state=3)
    assert matrix_norm(k) == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(ValueError):
        matrix_norm(np.zeros((3, 3)))


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_matrix_norm_matches_svd(n, seed):
    g = np.random.default_rng(seed).normal(size=(n, n))
    g /= abs(np.linalg.det(g)) ** (1 / n)
    s = np.linalg.svd(g, compute_uv=False)
    expect = max(s[0], 1 / s[-1])
    assert matrix_norm(g) == pytest.approx(expect, rel=1e-6)
    assert matrix_norm(g) == pytest.approx(matrix_norm(np.linalg.inv(g)), rel=1e-6)
    assert matrix_norm(g) >= 1 - 1e-9


def test_in_norm_ball_examples():
    assert in_norm_ball(np.eye(3), 0.1)
    assert not in_norm_ball(np.diag([2.0, 1.0, 0.5]), 0.5)
    with pytest.raises(ValueError):
        in_norm_ball(np.eye(3), 0.0)


def test_norm_ball_sandwich(rng):
    accepted = 0
    eps = 0.3
    while accepted < 100:
        g = PolyForm.random(Signature(2, 2), rng, eps=0.05).g
        if not in_norm_ball(g, eps):
            continue
        accepted += 1
        t = rng.uniform(0.5, 20)
        u = rng.normal(size=(50, 4))
        u *= ((1 - eps) * t * rng.random(50) / np.linalg.norm(u, axis=1))[:, None]
        assert np.all(np.linalg.norm(u @ np.linalg.inv(g), axis=1) <= t * (1 + 1e-12))


def test_shrinking_interval_examples():
    I = shrinking_interval(ShrinkingFamily(0, 2, 1), 10)
    assert I.lo == pytest.approx(-0.1) and I.hi == pytest.approx(0.1)
    fam = ShrinkingFamily(5, 1, 0)
    assert all(fam.interval_at(t) == Interval(4.5, 5.5) for t in (1, 7.5, 1e6))
    with pytest.raises(ValueError):
        shrinking_interval(fam, 0)


@given(st.floats(-10, 10), st.floats(0.01, 10), st.floats(0, 3))
def test_shrinking_family_nested(xi, c, kappa):
    fam = ShrinkingFamily(xi, c, kappa)
    grid = np.geomspace(0.5, 500, 25)
    for t in grid:
        assert fam.interval_at(t).length == pytest.approx(c * t ** (-kappa), rel=1e-9)
    for a, b in zip(grid, grid[1:]):
        outer, inner = fam.interval_at(a), fam.interval_at(b)
        assert outer.lo <= inner.lo + 1e-12 and inner.hi <= outer.hi + 1e-12
