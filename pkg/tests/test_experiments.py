import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from formcount.experiments import (ExperimentConfig, SeriesPoint, UniformPoint, fit_exponent,
                                   fixed_target_run, rows_csv, supmin_from_values, supmin_run,
                                   uniform_target_run, window_layout)
from formcount.forms import PolyForm, Signature
from formcount.geometry import cf_closed_form_d2_identity
from formcount.lattice import collect_values


def test_fit_exponent_examples():
    slope, r2 = fit_exponent([(t, t**-0.5) for t in (10, 100, 1000)])
    assert slope == pytest.approx(-0.5, abs=1e-12) and r2 == pytest.approx(1.0)
    assert fit_exponent([(t, 3.0) for t in (1, 2, 4, 8)])[0] == 0.0
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 0.5)])
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 0.0), (3, 1)])


@given(st.floats(-3, 3), st.floats(0.1, 100))
def test_fit_exponent_power_laws(k, a):
    slope, r2 = fit_exponent([(t, a * t**k) for t in (2.0, 5.0, 11.0, 30.0)])
    assert slope == pytest.approx(k, abs=1e-9)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(kappa=3.0).validate_fixed()       # kappa >= n - d
    with pytest.raises(ValueError):
        ExperimentConfig(t_grid=[10, 5]).validate_fixed()
    with pytest.raises(ValueError):
        ExperimentConfig(kappa=0.25, eta=2.0).validate_uniform()   # eta >= min(d, n-d)
    with pytest.raises(ValueError):
        ExperimentConfig(kappa=1.6, eta=0.0).validate_uniform()    # kappa >= (n-d-eta)/2
    ExperimentConfig(kappa=0.4, eta=0.1).validate_uniform()
    with pytest.raises(ValueError):
        ExperimentConfig.from_json({"p": 3, "bogus": 1})


def test_config_json_and_hash():
    cfg = ExperimentConfig(g_seed=4, t_grid=[5, 10])
    again = ExperimentConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert again == cfg and again.config_hash() == cfg.config_hash()
    assert ExperimentConfig(rng_seed=1).config_hash() != ExperimentConfig(rng_seed=2).config_hash()
    assert np.array_equal(cfg.form().g, again.form().g)


def test_fixed_target_prediction_column():
    cfg = ExperimentConfig(identity=True, kappa=1.0, c=2.0, t_grid=[10.0, 40.0])
    pts = fixed_target_run(cfg)
    cf = cf_closed_form_d2_identity(3, 2)
    assert pts[1].prediction == pytest.approx(2 * 40.0**2 * cf, rel=1e-12)
    for p in pts:
        assert p.abs_error == abs(p.count - p.prediction)
        assert p.normalized_error == p.abs_error / p.t ** (5 - 2 - 1)
        assert p.exists == (p.count >= 1) and p.error is None
        assert p.hi - p.lo == pytest.approx(2 / p.t)


def test_fixed_target_kappa_zero():
    cfg = ExperimentConfig(identity=True, kappa=0.0, c=1.0, t_grid=[4.0, 8.0, 16.0])
    pts = fixed_target_run(cfg)
    for p in pts:
        assert (p.lo, p.hi) == (-0.5, 0.5)
        assert p.normalized_error == pytest.approx(p.abs_error / p.t**3, rel=1e-12)


def test_fixed_target_random_form():
    cfg = ExperimentConfig(g_seed=11, kappa=1.0, t_grid=[10.0, 20.0, 30.0],
                           volume_samples=200_000)
    pts = fixed_target_run(cfg)
    assert all(p.exists for p in pts)
    assert all(p.abs_error == abs(p.count - p.prediction) for p in pts)
    slope, _ = fit_exponent([(p.t, p.normalized_error) for p in pts])
    assert math.isfinite(slope)


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_fixed_target_reports_errors_per_t():
    sig = Signature(3, 2)
    F = PolyForm(sig, np.diag([1e160, 1e-160, 1.0, 1.0, 1.0]))
    cfg = ExperimentConfig(kappa=1.0, t_grid=[0.5, 3.0], volume_samples=1000)
    pts = fixed_target_run(cfg, F)
    assert pts[0].error is None and pts[0].count == 1
    assert pts[1].error.startswith("FloatingPointError") and not pts[1].exists


def test_window_layout():
    cfg = ExperimentConfig(kappa=0.25, eta=0.0, n_cap=1.0)
    N, L, w, M = window_layout(16.0, cfg)
    assert (N, L, M) == (1.0, 0.5, 4) and w == 0.125
    cfg = ExperimentConfig(kappa=0.25, eta=0.5, n_cap=3.0)
    assert window_layout(4.0, cfg)[0] == 2.0 and window_layout(100.0, cfg)[0] == 3.0


def test_uniform_spot_checks_and_worst():
    cfg = ExperimentConfig(g_seed=3, kappa=0.25, eta=0.0, n_cap=1.0, t_grid=[12.0, 20.0],
                           volume_samples=200_000, spot_checks=20)
    rep = uniform_target_run(cfg, keep_histograms=True)
    assert len(rep.spot_checks) == sum(min(20, p.windows) for p in rep.points)
    assert all(c.agrees for c in rep.spot_checks)
    for p in rep.points:
        h = rep.histograms[p.t]
        assert -1.0 <= p.worst_lo < p.worst_hi <= 1.0 + 1e-12
        i = int(round((p.worst_lo + 1) / p.width))
        assert p.worst_count == int(h.buckets[i:i + p.buckets_per_window].sum())
        assert p.worst_rel_error == pytest.approx(abs(p.worst_count - p.worst_prediction) / p.worst_prediction)
    assert rep.worst.worst_rel_error == max(p.worst_rel_error for p in rep.points)


def test_uniform_degenerates_to_fixed():
    # a single window covering [-N, N) is the fixed interval of length 1 at kappa = 0
    base = dict(g_seed=5, kappa=0.0, c=1.0, xi=0.0, eta=0.0, n_cap=0.5, kappa_prime=0.0,
                t_grid=[6.0, 9.0], volume_samples=100_000)
    uni = uniform_target_run(ExperimentConfig(**base), spot_checks=0)
    fixed = fixed_target_run(ExperimentConfig(**base))
    for u, f in zip(uni.points, fixed):
        assert u.windows == 1 and u.worst_count == f.count


def test_supmin_examples():
    F = PolyForm.identity(Signature(2, 1))
    r = supmin_run(F, 1, 1)
    assert r.supmin == 0.5 and abs(r.argmax_xi) == 0.5 and r.finite and r.values == 3
    vals = [supmin_run(F, t, 1).supmin for t in (1, 2, 3, 4)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    empty = supmin_run(F, 0.5, 1, exclude_origin=True)
    assert empty.supmin == math.inf and not empty.finite
    with pytest.raises(ValueError):
        supmin_run(F, 0, 1)


def test_supmin_from_values_small():
    assert supmin_from_values(np.array([0.0]), 1.0) == (1.0, -1.0)
    s, xi = supmin_from_values(np.array([-3.0, 0.0, 0.4, 3.0]), 2.0)
    assert s == pytest.approx(1.5) and xi == pytest.approx(-1.5)
    s, xi = supmin_from_values(np.array([-3.0, 0.0, 0.4]), 2.0)
    assert s == pytest.approx(1.6) and xi == 2.0


@pytest.mark.parametrize("seed", range(6))
def test_supmin_dense_probe(seed):
    rng = np.random.default_rng(seed)
    F = PolyForm.random(Signature(2, 2), rng, eps=0.5)
    t, N = 3.0, 2.5
    r = supmin_run(F, t, N)
    vals, _ = collect_values(F, t, -1e6, 1e6)
    u = np.unique(vals)
    # probe at 10x the resolution of the typical gap
    grid = np.linspace(-N, N, 10 * 4 * max(1, len(u)) + 1)
    idx = np.clip(np.searchsorted(u, grid), 1, len(u) - 1)
    near = np.minimum(np.abs(grid - u[idx - 1]), np.abs(grid - u[idx]))
    assert near.max() <= r.supmin + 1e-12
    assert near.max() >= r.supmin - (grid[1] - grid[0])


def test_rows_csv():
    pts = [SeriesPoint(10.0, -0.1, 0.1, 5, 4.5, 0.5, 0.05, True)]
    text = rows_csv(pts, SeriesPoint.COLUMNS, ["manifest"])
    assert text.splitlines() == ["# manifest", ",".join(SeriesPoint.COLUMNS),
                                 "10.0,-0.1,0.1,5,4.5,0.5,0.05,1,"]
    assert UniformPoint.COLUMNS[0] == "t"


def test_fixed_target_reproducible():
    cfg = ExperimentConfig(g_seed=8, kappa=0.5, t_grid=[6.0, 9.0, 12.0], volume_samples=100_000)
    a = rows_csv(fixed_target_run(cfg, workers=1), SeriesPoint.COLUMNS)
    b = rows_csv(fixed_target_run(cfg, workers=4), SeriesPoint.COLUMNS)
    assert a == b
