"""Forward simulation of the zero-inflated UCSV data-generating process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .panel import Panel
from .zero import inv_logit


def _logit(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(p) - np.log1p(-p)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a simulated panel.

    ``zero_prevalence`` sets the starting zero probability of each series
    (``pi_0 = logit(prevalence)``).  With ``sigma2_pi = 0`` the probability
    stays there.  ``Sigma_pi`` overrides ``sigma2_pi`` with a full covariance.
    ``C`` is the impact matrix; the observation covariance at t is
    ``C^-1 diag(exp h_t) C^-T``.
    """

    T: int
    K: int = 1
    sigma2_theta: object = 0.01
    sigma2_h: object = 0.01
    sigma2_pi: object = 0.0
    Sigma_pi: np.ndarray | None = None
    C: np.ndarray | None = None
    theta0: object = 0.0
    h0: object = 0.0
    zero_prevalence: object = 0.2
    missing_prob: float = 0.0
    missing_mask: np.ndarray | None = None
    series_names: tuple[str, ...] | None = None

    def vec(self, value, name):
        v = np.broadcast_to(np.asarray(value, dtype=float), (self.K,)).copy()
        if np.any(v < 0) and name.startswith("sigma2"):
            raise ConfigError(f"{name} must be non-negative")
        return v

    def __post_init__(self):
        if self.T < 2 or self.K < 1:
            raise ConfigError("synthetic panel needs T >= 2 and K >= 1")
        for name in ("sigma2_theta", "sigma2_h", "sigma2_pi"):
            self.vec(getattr(self, name), name)
        prev = self.vec(self.zero_prevalence, "zero_prevalence")
        if np.any((prev < 0) | (prev > 1)):
            raise ConfigError("zero_prevalence must lie in [0, 1]")
        if self.C is not None:
            C = np.asarray(self.C, dtype=float)
            if C.shape != (self.K, self.K) or abs(np.linalg.det(C)) < 1e-12:
                raise ConfigError("C must be a non-singular K x K matrix")
        if self.Sigma_pi is not None:
            S = np.asarray(self.Sigma_pi, dtype=float)
            if S.shape != (self.K, self.K) or np.any(np.linalg.eigvalsh(S) < 0):
                raise ConfigError("Sigma_pi must be a K x K positive semi-definite matrix")


def _walk(x0, var_or_cov, T, rng):
    K = x0.shape[0]
    if np.ndim(var_or_cov) == 2:
        lam, vec = np.linalg.eigh(np.asarray(var_or_cov, dtype=float))
        root = vec * np.sqrt(np.clip(lam, 0.0, None))
        steps = rng.standard_normal((T, K)) @ root.T
    else:
        steps = rng.standard_normal((T, K)) * np.sqrt(var_or_cov)
    return np.vstack([x0, x0 + np.cumsum(steps, axis=0)])


def simulate(spec: SyntheticSpec, rng: np.random.Generator):
    """Return ``(panel, truth)``; ``truth`` holds every latent path.

    Paths include the initial state (T+1 rows); ``ystar``, ``p`` and
    ``gamma`` have T rows.
    """
    T, K = spec.T, spec.K
    theta = _walk(spec.vec(spec.theta0, "theta0"), spec.vec(spec.sigma2_theta, "sigma2_theta"), T, rng)
    h = _walk(spec.vec(spec.h0, "h0"), spec.vec(spec.sigma2_h, "sigma2_h"), T, rng)
    pi0 = _logit(spec.vec(spec.zero_prevalence, "zero_prevalence"))
    pi_var = spec.Sigma_pi if spec.Sigma_pi is not None else spec.vec(spec.sigma2_pi, "sigma2_pi")
    pi = _walk(pi0, pi_var, T, rng)  # +-inf at prevalence 1 or 0
    scale = np.exp(0.5 * h[1:])
    u = rng.standard_normal((T, K)) * scale
    if spec.C is not None:
        Cinv_T = np.linalg.inv(np.asarray(spec.C, dtype=float)).T
        u = u @ Cinv_T
    ystar = theta[1:] + u
    p = inv_logit(pi[1:])
    gamma = rng.random((T, K)) < p
    y = np.where(gamma, 0.0, ystar)
    if spec.missing_mask is not None:
        missing = np.array(spec.missing_mask, dtype=bool)
    else:
        missing = rng.random((T, K)) < spec.missing_prob
    # keep at least two observed cells per series
    for k in range(K):
        if (~missing[:, k]).sum() < 2:
            missing[:2, k] = False
    names = spec.series_names or tuple(f"y{k + 1}" for k in range(K))
    panel = Panel(np.where(missing, np.nan, y), missing, tuple(names),
                  tuple(f"t{t + 1:04d}" for t in range(T)))
    truth = {"theta": theta, "h": h, "pi": pi, "ystar": ystar, "p": p,
             "gamma": gamma.astype(np.int8), "missing": missing}
    return panel, truth
