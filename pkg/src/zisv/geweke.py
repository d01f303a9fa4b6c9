"""Joint-distribution ("getting it right") checks for the Gibbs samplers.

Two simulators target the same joint law of parameters and data:

* marginal-conditional: parameters from the prior (data not needed for
  parameter statistics);
* successive-conditional: alternate one Gibbs sweep given the data with a
  fresh draw of the data given the parameters.

If every block is an exact conditional update, means of any function of the
parameters agree between the two; each statistic gets a z-score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import MISSING, NONZERO, ZERO
from .rng import draw_inv_gamma, draw_inv_wishart, rng_handle
from .zero import inv_logit, kappa_from_gamma
from .zmucsv import MvHyper, MvChainState, ZMUCSVSampler
from .zucsv import UniChainState, UniHyper, ZUCSVSampler

Z_LIMIT = 4.0
PASS_FRACTION = 0.95


@dataclass
class GewekeResult:
    rows: list  # (statistic, marginal mean, successive mean, z)

    @property
    def z(self) -> np.ndarray:
        return np.array([r[3] for r in self.rows])

    @property
    def pass_fraction(self) -> float:
        return float(np.mean(np.abs(self.z) < Z_LIMIT))

    @property
    def passed(self) -> bool:
        return self.pass_fraction >= PASS_FRACTION

    def to_csv_rows(self):
        yield ("statistic", "marginal_mean", "successive_mean", "z")
        for name, a, b, z in self.rows:
            yield (name, repr(float(a)), repr(float(b)), repr(float(z)))


def _walks(x0, var, T, rng):
    """Independent scalar random walks; x0 (n,) or (n, K), var the same."""
    steps = rng.standard_normal((T, *np.shape(x0))) * np.sqrt(var)
    return np.concatenate([np.asarray(x0)[None], x0 + np.cumsum(steps, axis=0)])


def _z_table(mc: dict, sc_means: dict, sc_se: dict) -> GewekeResult:
    rows = []
    for name in mc:
        a = mc[name]
        se_a = a.std(ddof=1) / np.sqrt(a.size)
        se = np.hypot(se_a, sc_se[name])
        rows.append((name, a.mean(), sc_means[name], (a.mean() - sc_means[name]) / se))
    return GewekeResult(rows)


def _with_squares(stats: dict) -> dict:
    out = {}
    for k, v in stats.items():
        out[k] = v
        out[f"{k}^2"] = v * v
    return out


# ---------------------------------------------------------------------------
# univariate


GEWEKE_UNI_HYPER = UniHyper(offset_c=0.0)


def _uni_prior(hyper: UniHyper, T: int, n: int, rng):
    s2t = draw_inv_gamma(hyper.theta_shape, hyper.theta_rate, rng, size=n)
    s2h = draw_inv_gamma(hyper.h_shape, hyper.h_rate, rng, size=n)
    s2p = draw_inv_gamma(hyper.pi_shape, hyper.pi_rate, rng, size=n)
    theta = _walks(hyper.theta0_mean + np.sqrt(hyper.theta0_var) * rng.standard_normal(n), s2t, T, rng)
    h = _walks(hyper.h0_mean + np.sqrt(hyper.h0_var) * rng.standard_normal(n), s2h, T, rng)
    pi = _walks(hyper.pi0_mean + np.sqrt(hyper.pi0_var) * rng.standard_normal(n), s2p, T, rng)
    return dict(sigma2_theta=s2t, sigma2_h=s2h, sigma2_pi=s2p, theta=theta, h=h, pi=pi)


def _uni_stats(p, t_index):
    return _with_squares({
        "sigma2_theta": p["sigma2_theta"], "sigma2_h": p["sigma2_h"], "sigma2_pi": p["sigma2_pi"],
        f"theta_{t_index}": p["theta"][t_index], f"h_{t_index}": p["h"][t_index],
        f"p_{t_index}": inv_logit(p["pi"][t_index]),
    })


def _regenerate(theta, h, pi, missing, rng, C=None):
    """Fresh (y*, gamma, y) given paths; ``theta`` etc. are (T+1, ...)."""
    u = rng.standard_normal(theta[1:].shape) * np.exp(0.5 * h[1:])
    if C is not None:
        u = np.linalg.solve(C, u.T).T
    ystar = theta[1:] + u
    zero = rng.random(ystar.shape) < inv_logit(pi[1:])
    gamma = np.where(zero, ZERO, NONZERO).astype(np.int8)
    gamma[missing] = MISSING
    y = np.where(zero | missing, 0.0, ystar)
    return ystar, gamma, y


class _DoubledThetaVariance(ZUCSVSampler):
    """Mutation fixture: the trend variance update is off by a factor 2."""

    def draw_static_variances(self):
        super().draw_static_variances()
        self.state.sigma2_theta = 2.0 * self.state.sigma2_theta


class _DoubledThetaVarianceMv(ZMUCSVSampler):
    def draw_static_variances(self):
        super().draw_static_variances()
        self.state.sigma2_theta = 2.0 * self.state.sigma2_theta


def _set_data(sampler, y, gamma):
    sampler.y = y
    sampler.gamma = gamma
    sampler.observed = gamma != MISSING
    sampler.latent = gamma != NONZERO
    sampler.kappa = kappa_from_gamma(gamma)


def geweke_uni(T: int = 12, n_chains: int = 100, n_sweeps: int = 2000, seed: int = 0,
               hyper: UniHyper = GEWEKE_UNI_HYPER, n_marginal: int = 400_000,
               mutate: bool = False, t_index: int = 5, missing_t: int | None = 3) -> GewekeResult:
    """Geweke test of the univariate sampler.

    ``n_chains`` independent chains run side by side (batched), each started
    from an exact joint draw, so there is no burn-in and chain means are
    independent; total sweeps = ``n_chains * n_sweeps``.
    """
    rng = rng_handle(seed, 1000)
    mc = _uni_stats(_uni_prior(hyper, T, n_marginal, rng), t_index)

    p = _uni_prior(hyper, T, n_chains, rng)
    missing = np.zeros((T, n_chains), bool)
    if missing_t is not None:
        missing[missing_t - 1] = True
    ystar, gamma, y = _regenerate(p["theta"], p["h"], p["pi"], missing, rng)
    state = UniChainState(theta=p["theta"], h=p["h"], pi=p["pi"], ystar=ystar,
                          sigma2_theta=p["sigma2_theta"], sigma2_h=p["sigma2_h"], sigma2_pi=p["sigma2_pi"])
    cls = _DoubledThetaVariance if mutate else ZUCSVSampler
    sampler = cls(y, gamma, hyper, "zero_inflated", seed=seed, chain=0, state=state)
    sums = {k: np.zeros(n_chains) for k in mc}
    for _ in range(n_sweeps):
        s = sampler.sweep()
        st = _uni_stats(vars(s), t_index)
        for k in sums:
            sums[k] += st[k]
        ystar, gamma, y = _regenerate(s.theta, s.h, s.pi, missing, rng)
        _set_data(sampler, y, gamma)
        s.ystar = ystar
    chain_means = {k: v / n_sweeps for k, v in sums.items()}
    return _z_table(mc, {k: v.mean() for k, v in chain_means.items()},
                    {k: v.std(ddof=1) / np.sqrt(n_chains) for k, v in chain_means.items()})


# ---------------------------------------------------------------------------
# multivariate


def geweke_mv_hyper(K: int = 2) -> MvHyper:
    # finite fourth moments for every statistic: nu > K + 3 for Sigma_pi
    nu = 10.0
    return MvHyper(offset_c=0.0, nu_pi=nu, S_pi=0.1 * (nu - K - 1) * np.eye(K),
                   c_prior_mean="identity", c_prior_var=0.05)


def _mv_prior(hyper: MvHyper, T: int, K: int, rng, n: int | None = None):
    """Prior draws; with ``n`` every array gains a leading draw axis."""
    m = 1 if n is None else n
    pr = hyper.resolve(K)
    s2t = draw_inv_gamma(hyper.theta_shape, hyper.theta_rate, rng, size=(m, K))
    s2h = draw_inv_gamma(hyper.h_shape, hyper.h_rate, rng, size=(m, K))
    Sig = np.array([draw_inv_wishart(pr.nu_pi, pr.S_pi, rng) for _ in range(m)])
    root = np.linalg.cholesky(pr.c_var)
    C = pr.c_mean + rng.standard_normal((m, K, K)) @ root.T
    bad = np.abs(np.linalg.det(C)) < 1e-12
    while np.any(bad):  # rejection keeps the prior truncated to non-singular C
        C[bad] = pr.c_mean + rng.standard_normal((int(bad.sum()), K, K)) @ root.T
        bad = np.abs(np.linalg.det(C)) < 1e-12

    def walk(x0, var):
        return np.moveaxis(_walks(x0, var, T, rng), 0, 1)

    theta = walk(hyper.theta0_mean + np.sqrt(hyper.theta0_var) * rng.standard_normal((m, K)), s2t)
    h = walk(hyper.h0_mean + np.sqrt(hyper.h0_var) * rng.standard_normal((m, K)), s2h)
    pi0 = hyper.pi0_mean + np.sqrt(hyper.pi0_var) * rng.standard_normal((m, K))
    steps = np.einsum("mij,mtj->mti", np.linalg.cholesky(Sig), rng.standard_normal((m, T, K)))
    pi = np.concatenate([pi0[:, None], pi0[:, None] + np.cumsum(steps, axis=1)], axis=1)
    out = dict(sigma2_theta=s2t, sigma2_h=s2h, Sigma_pi=Sig, C=C, theta=theta, h=h, pi=pi)
    return out if n is not None else {k: v[0] for k, v in out.items()}


def _mv_stats(p, t_index):
    K = p["C"].shape[-1]
    out = {}
    for k in range(K):
        out[f"sigma2_theta[{k + 1}]"] = p["sigma2_theta"][..., k]
        out[f"sigma2_h[{k + 1}]"] = p["sigma2_h"][..., k]
        out[f"theta_{t_index}[{k + 1}]"] = p["theta"][..., t_index, k]
        out[f"h_{t_index}[{k + 1}]"] = p["h"][..., t_index, k]
        out[f"p_{t_index}[{k + 1}]"] = inv_logit(p["pi"][..., t_index, k])
    for i in range(K):
        for j in range(K):
            out[f"C[{i + 1},{j + 1}]"] = p["C"][..., i, j]
            if j >= i:
                out[f"Sigma_pi[{i + 1},{j + 1}]"] = p["Sigma_pi"][..., i, j]
    return _with_squares(out)


def geweke_mv(K: int = 2, T: int = 8, n_sweeps: int = 200_000, seed: int = 0,
              hyper: MvHyper | None = None, n_marginal: int = 200_000, mutate: bool = False,
              t_index: int = 5, n_chains: int = 10, n_batches: int = 100,
              missing_cell: tuple | None = (3, 1)) -> GewekeResult:
    """Geweke test of the multivariate sampler.

    ``n_sweeps`` are split over ``n_chains`` sequential chains, each started
    at an exact joint draw; the successive-conditional standard error uses
    batch means pooled over chains.
    """
    hyper = hyper or geweke_mv_hyper(K)
    rng = rng_handle(seed, 2000)
    mc = _mv_stats(_mv_prior(hyper, T, K, rng, n=n_marginal), t_index)

    missing = np.zeros((T, K), bool)
    if missing_cell is not None:
        missing[missing_cell[0] - 1, missing_cell[1] - 1] = True
    per_chain = n_sweeps // n_chains
    batch = max(per_chain * n_chains // n_batches, 1)
    trace = {k: np.empty(per_chain * n_chains) for k in mc}
    cls = _DoubledThetaVarianceMv if mutate else ZMUCSVSampler
    i = 0
    for c in range(n_chains):
        p = _mv_prior(hyper, T, K, rng)
        ystar, gamma, y = _regenerate(p["theta"], p["h"], p["pi"], missing, rng, C=p["C"])
        state = MvChainState(theta=p["theta"], h=p["h"], pi=p["pi"], ystar=ystar, C=p["C"],
                             Sigma_pi=p["Sigma_pi"], sigma2_theta=p["sigma2_theta"], sigma2_h=p["sigma2_h"])
        sampler = cls(y, gamma, hyper, "zero_inflated", seed=seed, chain=c + 1, state=state)
        for _ in range(per_chain):
            s = sampler.sweep()
            st = _mv_stats(vars(s), t_index)
            for k in trace:
                trace[k][i] = st[k]
            i += 1
            ystar, gamma, y = _regenerate(s.theta, s.h, s.pi, missing, rng, C=s.C)
            _set_data(sampler, y, gamma)
            s.ystar = ystar
    n_b = trace[next(iter(trace))].size // batch
    se = {k: v[:n_b * batch].reshape(n_b, batch).mean(1).std(ddof=1) / np.sqrt(n_b) for k, v in trace.items()}
    return _z_table(mc, {k: v.mean() for k, v in trace.items()}, se)
