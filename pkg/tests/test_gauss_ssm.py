import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import rw_conditional
from zisv.exceptions import NumericalError
from zisv.gauss_ssm import (
    BlockPrecisionSpec,
    RwSsmSpec,
    ffbs_draw,
    precision_draw,
    random_walk_precision,
    rw_posterior_draw,
)
from zisv.rng import rng_handle


def _random_uni(rng, T):
    obs = rng.normal(size=T) * 2
    offset = rng.normal(size=T)
    obs_var = rng.uniform(0.2, 3.0, size=T)
    present = rng.random(T) > 0.25
    q = rng.uniform(0.05, 1.5)
    m0, v0 = rng.normal(), rng.uniform(0.3, 4.0)
    return obs, offset, obs_var, present, q, m0, v0


def _filter_mean(obs, offset, obs_var, present, q, m0, v0, kernel, n, seed):
    r = rng_handle(seed)
    draws = np.array([
        rw_posterior_draw(obs, offset, obs_var, present, q, m0, v0, r, kernel=kernel)
        for _ in range(n)
    ])
    return draws


def test_ffbs_t1_matches_dense_conditional():
    # T=1, x0 ~ N(0,1), q=1, obs var 1, y=2: joint of (x0, x1, y) conditioned on y
    mean, cov = rw_conditional([2.0], [0.0], [1.0], [True], 1.0, 0.0, 1.0)
    assert_allclose(mean, [2 / 3, 4 / 3])
    assert_allclose(cov, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]])
    spec = RwSsmSpec(np.zeros(1), np.ones(1), 1.0, 0.0, 1.0, np.array([True]))
    r = rng_handle(3)
    d = np.array([ffbs_draw(spec, [2.0], r) for _ in range(50_000)])
    se = np.sqrt(np.diag(cov) / d.shape[0])
    assert np.all(np.abs(d.mean(0) - mean) < 3 * se)
    assert np.all(np.abs(np.cov(d.T) - cov) < 3 * np.sqrt(2 * np.diag(cov).max() ** 2 / d.shape[0]))


@pytest.mark.parametrize("kernel", ["ffbs", "precision"])
def test_prior_propagation_when_nothing_observed(kernel):
    T, q, v0 = 6, 0.3, 2.0
    present = np.zeros(T, dtype=bool)
    r = rng_handle(5)
    x = np.array([
        rw_posterior_draw(np.zeros(T), 0.0, 1.0, present, q, 1.0, v0, r, kernel=kernel)
        for _ in range(100_000)
    ])
    target = v0 + T * q
    se = target * np.sqrt(2 / x.shape[0])
    assert abs(x[:, -1].var() - target) < 3 * se


@pytest.mark.parametrize("kernel", ["ffbs", "precision"])
def test_vanishing_state_variance_gives_constant_path(kernel):
    rng = np.random.default_rng(0)
    obs = rng.normal(size=10)
    path = rw_posterior_draw(obs, 0.0, 1.0, np.ones(10, bool), 1e-12, 0.0, 1.0,
                             rng_handle(1), kernel=kernel)
    assert np.ptp(path) < 1e-5


def test_precision_mean_matches_dense_solve():
    rng = np.random.default_rng(42)
    T, K = 2, 2
    A = rng.normal(size=(K, K))
    spec = random_walk_precision(T, A @ A.T + np.eye(K), rng.normal(size=K), np.eye(K) * 0.5,
                                 obs_prec=np.array([np.eye(K) * 2, np.eye(K)]),
                                 obs_linear=rng.normal(size=(T, K)))
    _, mean = precision_draw(spec, rng_handle(0), return_mean=True)
    dense = np.linalg.solve(spec.dense(), spec.linear.ravel())
    assert_allclose(mean.ravel(), dense, atol=1e-10)


def test_precision_k1_agrees_with_ffbs():
    rng = np.random.default_rng(7)
    args = _random_uni(rng, 5)
    a = _filter_mean(*args, "ffbs", 50_000, 1)
    b = _filter_mean(*args, "precision", 50_000, 2)
    se = np.sqrt(a.var(0) / a.shape[0] + b.var(0) / b.shape[0])
    assert np.all(np.abs(a.mean(0) - b.mean(0)) < 3 * se)
    assert np.all(np.abs(a.var(0) - b.var(0)) < 3 * np.sqrt(2) * se * np.sqrt(a.var(0) + b.var(0)))


def test_precision_zero_obs_matches_prior():
    T, K = 5, 2
    S = np.array([[1.0, 0.4], [0.4, 0.5]])
    spec = random_walk_precision(T, S, np.zeros(K), np.eye(K))
    dense_cov = np.linalg.inv(spec.dense())
    # marginal covariance of x_T = init_cov + T * S
    assert_allclose(dense_cov[-K:, -K:], np.eye(K) + T * S, atol=1e-10)
    r = rng_handle(4)
    d = np.array([precision_draw(spec, r)[-1] for _ in range(50_000)])
    target = np.eye(K) + T * S
    se = np.sqrt((target**2 + np.outer(np.diag(target), np.diag(target))) / d.shape[0])
    assert np.all(np.abs(np.cov(d.T) - target) < 3 * se)


def test_missing_time_equals_deleting_observation():
    rng = np.random.default_rng(3)
    obs, offset, obs_var, _, q, m0, v0 = _random_uni(rng, 6)
    present = np.ones(6, bool)
    present[2] = False
    full_mean, _ = rw_conditional(obs, offset, obs_var, present, q, m0, v0)
    # deleting y_3 from the model: perturbing its stored value must not matter
    obs2 = obs.copy()
    obs2[2] = 1e6
    spec = random_walk_precision(6, [[q]], [m0], [[v0]],
                                 obs_prec=np.where(present, 1 / obs_var, 0)[:, None, None],
                                 obs_linear=np.where(present, (obs2 - offset) / obs_var, 0)[:, None])
    _, mean = precision_draw(spec, rng_handle(0), return_mean=True)
    assert_allclose(mean[:, 0], full_mean[1:], atol=1e-8)


def test_offset_shift_linearity():
    rng = np.random.default_rng(9)
    obs, offset, obs_var, present, q, m0, v0 = _random_uni(rng, 6)
    base, _ = rw_conditional(obs, offset, obs_var, present, q, m0, v0)
    shifted, _ = rw_conditional(obs + 2.5, offset + 2.5, obs_var, present, q, m0, v0)
    assert_allclose(base, shifted, atol=1e-10)


def test_kernel_exactness_randomised():
    """Acceptance criterion 1 lives in test_acceptance; this is a smaller smoke run."""
    rng = np.random.default_rng(123)
    for _ in range(5):
        T = rng.integers(1, 9)
        obs, offset, obs_var, present, q, m0, v0 = _random_uni(rng, T)
        mean, _ = rw_conditional(obs, offset, obs_var, present, q, m0, v0)
        w = np.where(present, 1 / obs_var, 0.0)
        spec = random_walk_precision(T, [[q]], [m0], [[v0]], obs_prec=w[:, None, None],
                                     obs_linear=(w * np.where(present, obs - offset, 0))[:, None])
        _, pm = precision_draw(spec, rng_handle(0), return_mean=True)
        assert_allclose(pm[:, 0], mean[1:], atol=1e-8)


def test_non_spd_precision_raises():
    spec = BlockPrecisionSpec(-np.ones((3, 1, 1)), np.zeros((2, 1, 1)), np.zeros((3, 1, 1)),
                              np.zeros((3, 1)))
    with pytest.raises(NumericalError):
        precision_draw(spec, rng_handle(0))
