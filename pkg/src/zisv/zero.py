"""Zero-probability block: Polya-Gamma augmented draw of the log-odds path.

With ``kappa = gamma - 1/2`` and ``omega ~ PG(1, pi)`` the Bernoulli
likelihood of a zero indicator becomes a Gaussian pseudo-observation
``kappa / omega`` of ``pi`` with variance ``1 / omega``.  Times where the
observation is missing carry no pseudo-observation at all.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .gauss_ssm import mv_rw_posterior_draw, rw_posterior_draw
from .panel import MISSING, ZERO
from .rng import draw_pg1

LOGIT_CLIP = 700.0


def inv_logit(x):
    """Zero probability from log-odds; clamps only the argument of exp."""
    out = expit(np.clip(np.asarray(x, dtype=float), -LOGIT_CLIP, LOGIT_CLIP))
    return float(out) if out.ndim == 0 else out


def kappa_from_gamma(gamma) -> np.ndarray:
    """``+1/2`` at observed zeros, ``-1/2`` at observed nonzeros, 0 where missing."""
    g = np.asarray(gamma)
    return np.where(g == MISSING, 0.0, np.where(g == ZERO, 0.5, -0.5))


def draw_omega(pi, active, rng: np.random.Generator) -> np.ndarray:
    """PG(1, pi_t) at active times; NaN elsewhere."""
    pi = np.asarray(pi, dtype=float)
    active = np.asarray(active, dtype=bool)
    out = np.full(pi.shape, np.nan)
    if active.any():
        out[active] = draw_pg1(pi[active], rng)
    return out


def _is_full_cov(var) -> bool:
    return np.ndim(var) == 2


def draw_pi_path(kappa, omega, active, var, init, rng: np.random.Generator,
                 kernel: str = "precision") -> np.ndarray:
    """Joint draw of ``pi[0..T]`` given the PG auxiliaries.

    ``var`` is a scalar or per-series vector of innovation variances for
    independent walks, or a full (K, K) covariance for a correlated walk.
    ``init = (mean, var)`` is the prior on ``pi[0]``.
    """
    kappa = np.asarray(kappa, dtype=float)
    active = np.asarray(active, dtype=bool)
    w = np.where(active, np.nan_to_num(np.asarray(omega, dtype=float), nan=1.0), 0.0)
    m0, v0 = init
    if _is_full_cov(var):
        if kappa.ndim == 1:
            kappa, w = kappa[:, None], w[:, None]
        K = kappa.shape[1]
        prec = w[:, :, None] * np.eye(K)
        return mv_rw_posterior_draw(var, m0, v0, prec, np.where(w > 0, kappa, 0.0), rng)
    safe = np.where(active, w, 1.0)
    obs = np.where(active, kappa / safe, 0.0)
    return rw_posterior_draw(obs, 0.0, 1.0 / safe, active, var, m0, v0, rng, kernel=kernel)


@dataclass(frozen=True)
class ZeroPrior:
    var: object  # scalar, (K,) vector, or (K, K) covariance
    init_mean: object = 0.0
    init_var: object = 1.0


@dataclass(frozen=True)
class LogOddsState:
    pi_path: np.ndarray
    gamma: np.ndarray
    omega: np.ndarray | None = None

    @property
    def active(self) -> np.ndarray:
        return np.asarray(self.gamma) != MISSING

    @property
    def kappa(self) -> np.ndarray:
        return kappa_from_gamma(self.gamma)

    @property
    def probs(self) -> np.ndarray:
        return inv_logit(self.pi_path[1:])


def gibbs_zero_sweep(state: LogOddsState, prior: ZeroPrior, rng: np.random.Generator,
                     kernel: str = "precision") -> LogOddsState:
    """One omega-then-pi sweep."""
    omega = draw_omega(state.pi_path[1:], state.active, rng)
    path = draw_pi_path(state.kappa, omega, state.active, prior.var,
                        (prior.init_mean, prior.init_var), rng, kernel=kernel)
    if path.shape != state.pi_path.shape:
        path = path.reshape(state.pi_path.shape)
    return replace(state, pi_path=path, omega=omega)
