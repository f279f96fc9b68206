from __future__ import annotations

import math

import numpy as np
import pytest

from spotvol.estimate import (
    EstimatorConfig,
    ThresholdRule,
    bipower_variation,
    spot_vol_truncated,
    threshold_v,
)
from spotvol.harness import (
    EstimatorSpec,
    ExperimentConfig,
    compute_metrics,
    default_grid,
    grid_search,
    run_experiment,
    tau_grid,
)
from spotvol.kernels import EXPONENTIAL, tabulated_kernel
from spotvol.reporting import dumps, summary_csv
from spotvol.sim import ModelSpec, path_rng, simulate_path


def small_config(n_paths=6, seed=3, n_steps=1000, y=1.5):
    model = ModelSpec(v0=0.2, kappa=3, theta=0.2, xi=0.4, rho=-0.3, jump_y=y, jump_scale=0.4,
                      n_steps=n_steps)
    tuned = EstimatorConfig(zeta=(1.6, 1.5), p_scalers=(0.6, 0.4))
    return ExperimentConfig(model=model, n_paths=n_paths, seed=seed, estimators=(
        EstimatorSpec("c0", "truncated", tuned),
        EstimatorSpec("c1", "practical", tuned, 1),
        EstimatorSpec("c2", "practical", tuned, 2),
        EstimatorSpec("t1", "theoretical", tuned, 1),
        EstimatorSpec("cf", "cf"),
        EstimatorSpec("cfd", "cf_debiased"),
    ))


def test_tau_grid_examples():
    g = tau_grid(8580)
    assert (g[0], g[-1], len(g)) == (850, 7650, 81)
    # floor(n / 100) = 1 at n = 100, so the grid is l_i = i
    np.testing.assert_array_equal(tau_grid(100), np.arange(10, 91))
    np.testing.assert_array_equal(tau_grid(1000), 10 * np.arange(10, 91))
    assert tau_grid(4914)[0] == 490
    with pytest.raises(ValueError):
        tau_grid(99)


def test_metrics_examples():
    truth = np.array([[1.0, 4.0]])
    m = compute_metrics(np.array([[1.1, 3.6]]), truth)
    assert m.mse_j[0] == pytest.approx((0.01 + 0.16) / 2)
    assert m.are == pytest.approx(0.1)
    assert m.re == pytest.approx(0.0, abs=1e-15)

    rng = np.random.default_rng(0)
    c = rng.uniform(0.1, 2, size=(5, 81))
    zero = compute_metrics(c, c)
    assert (zero.rmse, zero.are, zero.re) == (0.0, 0.0, 0.0)
    double = compute_metrics(2 * c, c)
    assert double.re == pytest.approx(1.0) and double.are == pytest.approx(1.0)
    assert double.rmse == pytest.approx(math.sqrt(np.mean(np.mean(c * c, axis=1))))
    assert double.rmse ** 2 == pytest.approx(np.mean(double.mse_j), rel=1e-15)
    with pytest.raises(ValueError):
        compute_metrics(c[:, :3], c)


def test_metrics_exclude_tiny_truths():
    truth = np.array([[0.0, 1.0], [1.0, 1.0]])
    est = np.array([[0.5, 1.5], [1.0, 1.0]])
    m = compute_metrics(est, truth, eps_truth=1e-12)
    assert m.excluded == 1
    assert m.ae_j[0] == pytest.approx(0.5)
    assert m.mse_j[0] == pytest.approx((0.25 + 0.25) / 2)


@pytest.mark.parametrize("w", [0.01, 0.04])
def test_noise_raises_mse_by_its_variance(w):
    rng = np.random.default_rng(1)
    truth = rng.uniform(0.5, 1.5, size=(2000, 81))
    est = truth + rng.normal(0, 0.05, size=truth.shape)
    base = compute_metrics(est, truth).rmse ** 2
    noisy = compute_metrics(est + rng.normal(0, math.sqrt(w), size=truth.shape), truth).rmse ** 2
    assert noisy - base == pytest.approx(w, rel=0.03)


def test_single_path_matches_direct_computation():
    model = ModelSpec(v0=0.5, kappa=1.0, theta=0.5, n_steps=2000)
    cfg = EstimatorConfig()
    config = ExperimentConfig(model=model, estimators=(EstimatorSpec("c0", "truncated", cfg),),
                              n_paths=1, seed=9)
    report = run_experiment(config)
    path = simulate_path(model, path_rng(9, 0))
    idx = tau_grid(path.n)
    v = threshold_v(bipower_variation(path), path.dt, ThresholdRule())
    direct = np.array([spot_vol_truncated(path, t, cfg.m(path.dt), v, EXPONENTIAL).value
                       for t in path.times[idx]])
    err = direct - path.v[idx]
    assert report.result("c0").metrics.rmse == pytest.approx(math.sqrt(np.mean(err ** 2)), rel=1e-12)


def test_report_is_independent_of_worker_count():
    config = small_config()
    a = dumps(run_experiment(config, workers=1).to_dict())
    b = dumps(run_experiment(config, workers=2).to_dict())
    c = dumps(run_experiment(config, workers=3).to_dict())
    assert a == b == c


def test_report_contents():
    report = run_experiment(small_config(n_paths=3, y=1.85))
    d = report.to_dict({"model": {"n_steps": "1000"}})
    assert "wall_clock" not in dumps(d)
    assert d["config"] == {"model": {"n_steps": "1000"}}
    assert len(d["estimators"]) == 6
    for e in d["estimators"]:
        assert len(e["per_path"]["mse"]) == 3
        assert e["rmse"] >= 0
    assert any("20/11" in n for n in d["notes"])
    csv_text = summary_csv(report.summary_rows())
    assert csv_text.splitlines()[0] == "Estimator,RMSE,ARE,RE,Tuning"
    assert "zeta=(1.6,1.5) p=(0.6,0.4)" in csv_text


def test_estimator_errors_are_tallied_not_raised():
    # a tabulated kernel living on [2, 3] leaves every late grid point without weight
    shifted = tabulated_kernel([2.0, 2.5, 3.0], [0.0, 2.0, 0.0], "shifted")
    config = ExperimentConfig(model=ModelSpec(v0=0.1, theta=0.1, n_steps=200), n_paths=2, estimators=(
        EstimatorSpec("ok", "truncated"),
        EstimatorSpec("odd", "truncated", EstimatorConfig(kernel=shifted, m_power=0.9)),
    ))
    report = run_experiment(config)
    assert report.result("ok").failures == 0
    odd = report.result("odd")
    assert odd.failures == 2
    assert odd.flag_counts["degenerate"] > 0


def test_spec_validation():
    with pytest.raises(ValueError):
        EstimatorSpec("x", "practical", EstimatorConfig(zeta=(1.5,)), 1)
    with pytest.raises(ValueError):
        EstimatorSpec("x", "truncated", stage=1)
    with pytest.raises(ValueError):
        EstimatorSpec("x", "bogus")
    with pytest.raises(ValueError):
        ExperimentConfig(model=ModelSpec(n_steps=1000), estimators=(EstimatorSpec("a", "cf"),
                                                                     EstimatorSpec("a", "cf")))


def test_default_grids():
    assert default_grid(1.1, 1.9)[0] == 1.1 and default_grid(1.1, 1.9)[-1] == 1.9
    assert len(default_grid(1.1, 1.9)) == 17
    assert len(default_grid(0.1, 0.9)) == 17


def test_grid_search_single_point_and_crn():
    config = small_config(n_paths=4)
    res = grid_search(config, names=["c1"], zeta_grid=(1.5,), p_grid=(0.5,), pilot_paths=3)
    spec, rmse = res.best["c1"]
    assert spec.tuning() == {"zeta": [1.5], "p": [0.5]}
    assert math.isfinite(rmse)

    kw = dict(names=["c1", "t1", "cfd"], zeta_grid=(1.3, 1.7), p_grid=(0.3, 0.7),
              lambda_grid=(1.5, 1.9), pilot_paths=4)
    a = grid_search(config, **kw)
    b = grid_search(config, workers=2, **kw)
    assert dumps(a.to_dict()) == dumps(b.to_dict())
    for name, rows in a.surface.items():
        assert len(rows) == {"c1": 4, "t1": 2, "cfd": 4}[name]
        assert a.best[name][1] == min(r for _, r in rows)
    ind = grid_search(config, independent=True, **kw)
    assert ind.independent and dumps(ind.to_dict()) != dumps(a.to_dict())


def test_grid_search_needs_tunable_estimators():
    with pytest.raises(ValueError):
        grid_search(small_config(), names=["c0"])
