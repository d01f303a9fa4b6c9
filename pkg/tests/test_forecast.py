import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from zisv.draws import DrawStore, Schedule
from zisv.exceptions import ConfigError, EvaluationError
from zisv.forecast import (
    DEFAULT_BETAS,
    ForecastSet,
    calibration,
    interval_forecast,
    mae,
    mae_ratio,
    order_quantile,
    point_forecast,
    rolling_protocol,
    simulate_forecast,
    window_schedule,
)
from zisv.rng import rng_handle
from zisv.synthetic import SyntheticSpec, simulate


def _store(R=4000, K=1, theta=1.0, h=0.0, pi=-40.0, s2t=1e-12, s2h=1e-12, s2p=1e-12, model="zucsv",
           scale=None):
    T = 3
    arrays = {
        "theta": np.full((R, T + 1, K), theta),
        "h": np.full((R, T + 1, K), h),
        "pi": np.full((R, T + 1, K), pi),
        "ystar": np.zeros((R, T, K)),
        "sigma2_theta": np.full((R, K), s2t),
        "sigma2_h": np.full((R, K), s2h),
        "sigma2_pi": np.full((R, K), s2p),
    }
    return DrawStore(model, arrays, np.arange(R), scale_factors=scale)


def _fs(values):
    d = np.asarray(values, dtype=float).reshape(-1, 1, 1)
    return ForecastSet.from_draws(d, betas=(50.0,))


# simulate ------------------------------------------------------------------------------

def test_certain_zero_forecasts_exact_zero():
    fs = simulate_forecast(_store(pi=40.0), 5, rng_handle(0))
    assert np.all(fs.draws == 0.0)
    assert np.all(point_forecast(fs) == 0.0)


def test_degenerate_propagation():
    fs = simulate_forecast(_store(R=40_000, h=np.log(0.5)), 3, rng_handle(1))
    x = fs.draws[:, :, 0]
    n = x.shape[0]
    assert np.all(np.abs(x.mean(0) - 1.0) < 4 * np.sqrt(0.5 / n))
    assert np.all(np.abs(x.var(0) - 0.5) < 4 * 0.5 * np.sqrt(2 / n))


def test_trend_variance_grows_linearly():
    s2t = 0.3
    fs = simulate_forecast(_store(R=40_000, s2t=s2t), 6, rng_handle(2), keep_paths=True)
    th = fs.paths["theta"][:, :, 0]
    n = th.shape[0]
    for h in range(1, 7):
        v = th[:, h - 1].var()
        se = v * np.sqrt(2 / n)
        assert abs(v - h * s2t) < 3 * se


def test_plain_model_never_zero():
    fs = simulate_forecast(_store(pi=40.0, model="ucsv"), 4, rng_handle(3))
    assert np.all(fs.draws != 0.0)


def test_multivariate_covariance_and_scale():
    K, R = 2, 60_000
    st = _store(R=R, K=K, theta=0.0, model="zmucsv", scale=np.array([2.0, 1.0]))
    C = np.array([[1.0, 0.0], [0.8, 1.0]])
    st.arrays["C"] = np.broadcast_to(C, (R, K, K)).copy()
    st.arrays["Sigma_pi"] = np.broadcast_to(np.eye(K) * 1e-12, (R, K, K)).copy()
    del st.arrays["sigma2_pi"]
    fs = simulate_forecast(st, 1, rng_handle(4))
    Ci = np.linalg.inv(C)
    Sigma = np.diag([2.0, 1.0]) @ Ci @ Ci.T @ np.diag([2.0, 1.0])
    got = np.cov(fs.draws[:, 0].T)
    se = np.sqrt((Sigma**2 + np.outer(np.diag(Sigma), np.diag(Sigma))) / R)
    assert np.all(np.abs(got - Sigma) < 4 * se)
    raw = simulate_forecast(st, 1, rng_handle(4), original_scale=False)
    assert_allclose(raw.draws * [2.0, 1.0], fs.draws)


# point and interval ------------------------------------------------------------------------

def test_point_forecast_examples():
    assert point_forecast(_fs([0, 0, 0, 1.2, 3.1]))[0, 0] == 0.0
    assert point_forecast(_fs([1, 2, 3, 4]))[0, 0] == 2.5
    assert point_forecast(_fs([0.7] * 6))[0, 0] == 0.7


def test_interval_examples():
    lo, hi, deg = interval_forecast(_fs([-2, -1, 1, 2]), 50)
    assert (lo[0, 0], hi[0, 0], deg[0, 0]) == (-1.0, 1.0, False)
    d = [0.0] * 90 + list(np.linspace(1, 2, 10))
    lo, hi, deg = interval_forecast(_fs(d), 50)
    assert lo[0, 0] == hi[0, 0] == 0.0 and deg[0, 0]
    x = np.random.default_rng(0).normal(size=101)
    lo, hi, _ = interval_forecast(_fs(x), 100 - 1e-9)
    assert lo[0, 0] == x.min() and hi[0, 0] == x.max()
    with pytest.raises(ConfigError):
        interval_forecast(_fs(x), 100)


def test_order_quantile_convention():
    x = np.arange(10.0)[:, None]
    assert order_quantile(x, 0.5)[0] == 4.5
    assert order_quantile(x, 0.0)[0] == 0.0
    assert order_quantile(x, 1.0)[0] == 9.0
    assert order_quantile(x, 0.26)[0] == 2.0  # 2.34 rounds to the nearest rank


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5) | st.just(0.0), min_size=1, max_size=40),
       st.floats(1, 98), st.floats(1, 98))
def test_interval_nesting_and_median(values, b1, b2):
    b1, b2 = sorted((b1, b2))
    fs = ForecastSet.from_draws(np.array(values).reshape(-1, 1, 1), betas=(b1, b2))
    l1, u1 = fs.intervals[b1][:2]
    l2, u2 = fs.intervals[b2][:2]
    assert l2[0, 0] <= l1[0, 0] <= u1[0, 0] <= u2[0, 0]
    lo, hi, deg = interval_forecast(fs, 50)
    assert lo[0, 0] <= fs.medians[0, 0] <= hi[0, 0]
    if deg[0, 0]:
        assert lo[0, 0] == hi[0, 0] == 0.0


# mae ------------------------------------------------------------------------------------------

def test_mae_examples():
    assert mae(np.ones((2, 1)), np.ones((2, 1))).average == 0.0
    assert mae(np.zeros((2, 1)), np.array([[1.0], [-1.0]])).average == 1.0
    r = mae(np.zeros((3, 1)), np.array([[1.0], [np.nan], [3.0]]))
    assert r.per_series[0] == 2.0 and r.n_cells[0] == 2
    with pytest.raises(EvaluationError):
        mae(np.zeros((2, 1)), np.full((2, 1), np.nan))


def test_mae_ratio():
    a = mae(np.zeros((2, 2)), np.array([[1.0, 2.0], [1.0, 2.0]]))
    b = mae(np.zeros((2, 2)), np.array([[2.0, 2.0], [2.0, 2.0]]))
    assert_allclose(mae_ratio(a, b), [0.5, 1.0])


# calibration ------------------------------------------------------------------------------

def test_calibration_examples():
    wide = ForecastSet.from_draws(np.array([-1e9, 1e9]).reshape(-1, 1, 1), betas=DEFAULT_BETAS)
    cur = calibration([(wide, np.array([[3.0]]))])
    assert np.all(cur.pooled == 1.0)
    fs = ForecastSet.from_draws(np.array([-1.0, 1.0]).reshape(-1, 1, 1), betas=(99.0,))
    assert calibration([(fs, np.array([[0.0]]))]).pooled[0] == 1.0
    assert calibration([(fs, np.array([[1.0]]))]).pooled[0] == 1.0  # closed interval


def test_calibration_all_degenerate_is_bookkept():
    fs = ForecastSet.from_draws(np.zeros((10, 1, 1)), betas=(50.0,))
    cur = calibration([(fs, np.array([[0.0]]))])
    assert cur.n_eval.sum() == 0 and cur.n_excluded.sum() == 1
    assert np.isnan(cur.pooled[0])
    assert np.isnan(cur.abs_error())


def test_calibration_missing_and_components():
    d = np.stack([np.linspace(-1, 1, 11)] * 2, axis=1)[:, None, :]
    fs = ForecastSet.from_draws(d, betas=(50.0,))
    cur = calibration([(fs, np.array([[0.0, np.nan]])), (fs, np.array([[0.9, 0.1]]))])
    assert cur.n_eval[0].tolist() == [2, 1]
    assert cur.pooled[0] == pytest.approx(2 / 3)
    assert cur.component_mean[0] == pytest.approx(0.75)


# protocol ---------------------------------------------------------------------------------

def test_window_schedule():
    assert window_schedule(53, 45, 8) == [(45, 53)]
    assert window_schedule(61, 45, 8) == [(45, 53), (53, 61)]
    assert window_schedule(60, 45, 8) == [(45, 53)]
    assert window_schedule(120, 45, 8)[-1] == (109, 117)
    assert window_schedule(61, 45, 8, step=4) == [(45, 53), (49, 57), (53, 61)]
    with pytest.raises(ConfigError):
        window_schedule(52, 45, 8)


def test_rolling_protocol_small_and_deterministic(tmp_path):
    spec = SyntheticSpec(T=24, K=2, zero_prevalence=[0.5, 0.05], theta0=[2.0, 1.0])
    panel, _ = simulate(spec, rng_handle(5))
    sched = Schedule(60, 20, 2)
    a = rolling_protocol(panel, ("zmucsv", "mucsv"), window0=16, H=4, seed=9, schedule=sched)
    b = rolling_protocol(panel, ("zmucsv", "mucsv"), window0=16, H=4, seed=9, schedule=sched)
    assert a.windows == [(16, 20), (20, 24)]
    assert np.array_equal(a.abs_errors["zmucsv"], b.abs_errors["zmucsv"], equal_nan=True)
    assert a.abs_errors["mucsv"].shape == (2, 4, 2)
    assert a.mae("zmucsv").per_series.shape == (2,)
    a.write(tmp_path)
    head = (tmp_path / "mae.csv").read_text().splitlines()[0]
    assert head == "window,series,h,model,mae"
    head = (tmp_path / "calibration.csv").read_text().splitlines()[0]
    assert head == "beta,model,empirical_coverage,n_eval,n_excluded"
    b.write(tmp_path / "again")
    for name in ("mae.csv", "calibration.csv", "calibration_components.csv", "mae_ratio.csv", "intervals.csv"):
        assert (tmp_path / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_rolling_protocol_univariate_models_and_original_scale():
    spec = SyntheticSpec(T=14, K=1, zero_prevalence=0.3, theta0=50.0, h0=np.log(100.0))
    panel, _ = simulate(spec, rng_handle(6))
    rep = rolling_protocol(panel, ("zucsv", "ucsv"), window0=10, H=4, seed=1, schedule=Schedule(40, 10, 1))
    med = rep.forecasts["ucsv"][0].medians
    assert np.all(np.abs(med) > 5)  # forecasts returned on the data's own scale
