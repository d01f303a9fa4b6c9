import hashlib

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, stats
from scipy.special import digamma

from oracles import rw_conditional
from zisv.exceptions import NumericalError
from zisv.gauss_ssm import precision_draw, random_walk_precision
from zisv.rng import rng_handle
from zisv.sv import (
    INACTIVE,
    LOG_CHI2_MIXTURE,
    MixtureTable,
    draw_h_path,
    draw_indicators,
    linearize,
)

TAB = LOG_CHI2_MIXTURE
FROZEN_TABLE_DIGEST = "c6232c5fc05f63bfe58a7b1a2b76c0b8f85dd108d24ae9d648e955671b901a5e"


def test_table_checksum():
    blob = np.concatenate([TAB.weights, TAB.means, TAB.variances]).round(5)
    digest = hashlib.sha256(np.ascontiguousarray(blob).tobytes()).hexdigest()
    # frozen from the transcribed constants; any edit to the table must update this
    assert digest == FROZEN_TABLE_DIGEST
    assert TAB.size == 10
    assert abs(TAB.weights.sum() - 1) < 1e-12


def test_mixture_fidelity_by_quadrature():
    def dens(x):
        return np.sum(TAB.weights * stats.norm.pdf(x, TAB.means, np.sqrt(TAB.variances)))

    z = integrate.quad(dens, -80, 30, limit=400)[0]
    m1 = integrate.quad(lambda x: x * dens(x), -80, 30, limit=400)[0] / z
    m2 = integrate.quad(lambda x: x * x * dens(x), -80, 30, limit=400)[0] / z
    target_mean = digamma(0.5) + np.log(2.0)
    assert abs(target_mean - -1.27036) < 1e-5
    assert abs(m1 - target_mean) < 0.02
    assert abs(m2 - m1**2 - np.pi**2 / 2) < 0.05
    assert_allclose([TAB.mean(), TAB.variance()], [m1, m2 - m1**2], atol=1e-8)


@pytest.mark.parametrize("r,c,want", [(1.0, 0.0, 0.0), (0.0, 1e-4, np.log(1e-4)), (-2.0, 0.0, np.log(4.0))])
def test_linearize(r, c, want):
    assert_allclose(linearize(r, c), want, rtol=1e-14)
    assert_allclose(linearize(-r, c), want, rtol=1e-14)


def test_single_component_table():
    t = MixtureTable([1.0], [0.0], [1.0])
    s = draw_indicators(rng_handle(0).normal(size=50), np.zeros(50), rng_handle(1), t)
    assert np.all(s == 0)


def test_symmetric_two_components():
    t = MixtureTable([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0])
    n = 200_000
    s = draw_indicators(np.zeros(n), np.zeros(n), rng_handle(2), t)
    assert abs(s.mean() - 0.5) < 3 * 0.5 / np.sqrt(n)


def test_tiny_variance_component_dominates():
    v = TAB.variances.copy()
    v[2] = 1e-16
    t = MixtureTable(TAB.weights, TAB.means, v)
    h = 0.3
    y = h + TAB.means[2]
    # oracle: the ten posterior weights evaluated directly
    w = TAB.weights * stats.norm.pdf(y, h + TAB.means, np.sqrt(v))
    w /= w.sum()
    assert w[2] > 1 - 1e-6
    s = draw_indicators(np.full(10_000, y), np.full(10_000, h), rng_handle(3), t)
    assert np.all(s == 2)


def test_indicator_frequencies_match_posterior_weights():
    y, h = -2.0, 0.5
    w = TAB.weights * stats.norm.pdf(y, h + TAB.means, np.sqrt(TAB.variances))
    w /= w.sum()
    n = 400_000
    s = draw_indicators(np.full(n, y), np.full(n, h), rng_handle(4))
    freq = np.bincount(s, minlength=10) / n
    assert np.all(np.abs(freq - w) < 4 * np.sqrt(w * (1 - w) / n) + 1e-12)


def test_inactive_times_skipped():
    act = np.array([True, False, True])
    s = draw_indicators(np.zeros(3), np.zeros(3), rng_handle(0), active=act)
    assert s[1] == INACTIVE and s[0] >= 0 and s[2] >= 0


def test_underflow_raises():
    with pytest.raises(NumericalError):
        draw_indicators(np.array([np.inf]), np.zeros(1), rng_handle(0))


def test_no_observations_gives_prior():
    T, q, v0 = 5, 0.2, 1.0
    r = rng_handle(5)
    ind = np.full(T, INACTIVE)
    x = np.array([draw_h_path(np.zeros(T), ind, q, (0.0, v0), r)[-1] for _ in range(50_000)])
    target = v0 + T * q
    assert abs(x.var() - target) < 3 * target * np.sqrt(2 / x.size)
    assert abs(x.mean()) < 3 * np.sqrt(target / x.size)


def test_fixed_indicators_dense_oracle():
    ind = np.array([3, 7, 0])
    y = np.array([-0.4, -3.1, 1.2])
    q, m0, v0 = 0.3, 0.1, 1.5
    mean, _ = rw_conditional(y, TAB.means[ind], TAB.variances[ind], np.ones(3, bool), q, m0, v0)
    w = 1 / TAB.variances[ind]
    spec = random_walk_precision(3, [[q]], [m0], [[v0]], obs_prec=w[:, None, None],
                                 obs_linear=(w * (y - TAB.means[ind]))[:, None])
    _, pm = precision_draw(spec, rng_handle(0), return_mean=True)
    assert_allclose(pm[:, 0], mean[1:], atol=1e-8)
    # the sampled path agrees with the oracle in distribution too
    r = rng_handle(6)
    d = np.array([draw_h_path(y, ind, q, (m0, v0), r) for _ in range(40_000)])
    _, cov = rw_conditional(y, TAB.means[ind], TAB.variances[ind], np.ones(3, bool), q, m0, v0)
    assert np.all(np.abs(d.mean(0) - mean) < 4 * np.sqrt(np.diag(cov) / d.shape[0]))


def test_pinned_by_vanishing_mixture_variance():
    t = MixtureTable([1.0], [-1.2], [1e-12])
    y = np.full(6, 0.8)
    h = draw_h_path(y, np.zeros(6, int), 0.5, (0.0, 1.0), rng_handle(7), table=t)
    assert np.all(np.abs(h[1:] - (0.8 + 1.2)) < 1e-4)


def test_batched_paths_match_shape():
    y = rng_handle(0).normal(size=(8, 3))
    ind = draw_indicators(y, np.zeros((8, 3)), rng_handle(1))
    h = draw_h_path(y, ind, np.array([0.1, 0.2, 0.3]), (0.0, 0.0), rng_handle(2))
    assert h.shape == (9, 3) and np.all(h[0] == 0.0)
