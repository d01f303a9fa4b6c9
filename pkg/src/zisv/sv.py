"""Stochastic-volatility block.

The log-squared residual ``log(u^2 + c)`` is treated as ``h + e`` with ``e``
distributed as log chi-square(1), approximated by a ten-component Gaussian
mixture.  Given the component labels the volatility path is a linear Gaussian
random walk, drawn exactly by :mod:`zisv.gauss_ssm`.

Component labels are 0-based here; ``-1`` marks times with no observation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import NumericalError
from .gauss_ssm import rw_posterior_draw

INACTIVE = -1


@dataclass(frozen=True)
class MixtureTable:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        if not (w.shape == m.shape == v.shape and w.ndim == 1):
            raise ValueError("mixture arrays must be 1-D and of equal length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        if np.any(v <= 0):
            raise ValueError("mixture variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def size(self) -> int:
        return self.weights.size

    def mean(self) -> float:
        return float(self.weights @ self.means)

    def variance(self) -> float:
        mu = self.mean()
        return float(self.weights @ (self.variances + (self.means - mu) ** 2))


# Ten-component approximation to log chi-square(1) (Omori, Chib, Shephard and
# Nakajima, 2007).
LOG_CHI2_MIXTURE = MixtureTable(
    weights=np.array([0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
                      0.18842, 0.12047, 0.05591, 0.01575, 0.00115]),
    means=np.array([1.92677, 1.34744, 0.73504, 0.02266, -0.85173,
                    -1.97278, -3.46788, -5.55246, -8.68384, -14.65000]),
    variances=np.array([0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
                        0.98583, 1.57469, 2.54498, 4.16591, 7.33342]),
)

DEFAULT_OFFSET = 1e-4


def linearize(residual, offset_c: float = DEFAULT_OFFSET):
    """``log(residual^2 + offset_c)``."""
    r = np.asarray(residual, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.log(r * r + offset_c)
    return float(out) if out.ndim == 0 else out


def component_log_probs(lin_obs, h, table: MixtureTable = LOG_CHI2_MIXTURE):
    """Unnormalized log posterior weights, shape ``lin_obs.shape + (J,)``."""
    d = np.asarray(lin_obs, dtype=float)[..., None] - np.asarray(h, dtype=float)[..., None] - table.means
    return np.log(table.weights) - 0.5 * np.log(2 * np.pi * table.variances) - 0.5 * d * d / table.variances


def draw_indicators(lin_obs, h, rng: np.random.Generator, table: MixtureTable = LOG_CHI2_MIXTURE,
                    active=None) -> np.ndarray:
    """Draw mixture labels given the linearized observations and ``h[1..T]``.

    ``h`` has the shape of ``lin_obs`` (times 1..T, no initial state).
    Returns integer labels with ``INACTIVE`` where ``active`` is False.
    """
    lin_obs = np.asarray(lin_obs, dtype=float)
    active = np.ones(lin_obs.shape, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    out = np.full(lin_obs.shape, INACTIVE, dtype=np.int64)
    if not active.any():
        return out
    lp = component_log_probs(lin_obs[active], np.broadcast_to(h, lin_obs.shape)[active], table)
    norm = logsumexp(lp, axis=-1, keepdims=True)
    if not np.all(np.isfinite(norm)):
        raise NumericalError("mixture component probabilities underflow; cannot renormalize")
    cdf = np.cumsum(np.exp(lp - norm), axis=-1)
    u = rng.random(cdf.shape[0]) * cdf[:, -1]
    out[active] = np.minimum((cdf < u[:, None]).sum(axis=-1), table.size - 1)
    return out


def draw_h_path(lin_obs, indicators, sigma2_h, init, rng: np.random.Generator,
                table: MixtureTable = LOG_CHI2_MIXTURE, kernel: str = "precision") -> np.ndarray:
    """Joint draw of ``h[0..T]`` given mixture labels.

    ``init = (mean, var)`` is the prior on ``h[0]``; ``var = 0`` conditions on
    a known ``h[0] = mean``.  Works for a (T,) path or (T, K) independent paths.
    """
    ind = np.asarray(indicators)
    present = ind != INACTIVE
    safe = np.where(present, ind, 0)
    offset = np.where(present, table.means[safe], 0.0)
    var = np.where(present, table.variances[safe], 1.0)
    obs = np.where(present, lin_obs, 0.0)
    m0, v0 = init
    return rw_posterior_draw(obs, offset, var, present, sigma2_h, m0, v0, rng, kernel=kernel)
