"""Gibbs sampler for the zero-inflated univariate UCSV model and its plain baseline.

Model, per series::

    y*_t = theta_t + exp(h_t / 2) e_t
    theta_t, h_t, pi_t  random walks with variances sigma2_theta, sigma2_h, sigma2_pi
    y_t = 0 with probability p_t = inv_logit(pi_t), otherwise y_t = y*_t

The sampler works on a T x B block of *independent* series at once: every
array carries a trailing series axis and each column is its own model.  A
panel fitted with this module is therefore B separate univariate fits that
share a random stream, which is also how the Geweke harness batches replicates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .draws import DrawCollector, DrawStore, Schedule
from .exceptions import ConfigError, NumericalError
from .gauss_ssm import rw_posterior_draw
from .panel import MISSING, ZERO, Panel, derive_zero_mask
from .rng import chain_streams, draw_inv_gamma
from .sv import DEFAULT_OFFSET, draw_h_path, draw_indicators, linearize
from .zero import draw_omega, draw_pi_path, kappa_from_gamma

MODES = ("zero_inflated", "plain")


@dataclass(frozen=True)
class UniHyper:
    theta0_mean: float = 0.0
    theta0_var: float = 10.0
    h0_mean: float = 0.0
    h0_var: float = 1.0
    pi0_mean: float = 0.0
    pi0_var: float = 1.0
    theta_shape: float = 11.0
    theta_rate: float = 1.0
    h_shape: float = 101.0
    h_rate: float = 1.0
    pi_shape: float = 11.0
    pi_rate: float = 1.0
    offset_c: float = DEFAULT_OFFSET
    schedule: Schedule = field(default_factory=Schedule)
    kernel: str = "precision"
    strict_plain: bool = False

    def __post_init__(self):
        for name in ("theta0_var", "h0_var", "pi0_var"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("theta_shape", "theta_rate", "h_shape", "h_rate", "pi_shape", "pi_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.offset_c < 0:
            raise ConfigError("offset_c must be non-negative")
        if self.kernel not in ("precision", "ffbs"):
            raise ConfigError(f"unknown kernel {self.kernel!r}")

    @staticmethod
    def prior_mean(shape, rate):
        return rate / (shape - 1) if shape > 1 else rate


@dataclass
class UniChainState:
    theta: np.ndarray   # (T+1, B)
    h: np.ndarray       # (T+1, B)
    pi: np.ndarray      # (T+1, B)
    ystar: np.ndarray   # (T, B)
    sigma2_theta: np.ndarray  # (B,)
    sigma2_h: np.ndarray
    sigma2_pi: np.ndarray
    indicators: np.ndarray | None = None
    omega: np.ndarray | None = None

    def copy(self) -> "UniChainState":
        return replace(self, **{k: (None if v is None else np.array(v, copy=True))
                                for k, v in vars(self).items()})


def _logit(p):
    return np.log(p) - np.log1p(-p)


def initial_state(y: np.ndarray, gamma: np.ndarray, hyper: UniHyper) -> UniChainState:
    """Deterministic starting point computed from the data."""
    T, B = y.shape
    observed = gamma != MISSING
    nonzero = observed & (gamma != ZERO)
    y0 = np.where(observed, y, 0.0)
    theta_init = np.cumsum(y0, axis=0) / np.arange(1, T + 1)[:, None]
    h_init = np.zeros(B)
    for b in range(B):
        v = y[nonzero[:, b], b]
        if v.size >= 2 and v.var(ddof=1) > 0:
            h_init[b] = np.log(v.var(ddof=1))
    n_obs = np.maximum(observed.sum(0), 1)
    frac = np.clip((gamma == ZERO).sum(0) / n_obs, 1e-12, 1 - 1e-12)
    pi_init = np.clip(_logit(frac), -4.0, 4.0)
    theta = np.vstack([theta_init[:1], theta_init])
    return UniChainState(
        theta=theta,
        h=np.tile(h_init, (T + 1, 1)),
        pi=np.tile(pi_init, (T + 1, 1)),
        ystar=np.where(nonzero, y, theta_init),
        sigma2_theta=np.full(B, hyper.prior_mean(hyper.theta_shape, hyper.theta_rate)),
        sigma2_h=np.full(B, hyper.prior_mean(hyper.h_shape, hyper.h_rate)),
        sigma2_pi=np.full(B, hyper.prior_mean(hyper.pi_shape, hyper.pi_rate)),
    )


def _check(name, it, *arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise NumericalError("non-finite state", iteration=it, block=name)


class ZUCSVSampler:
    """Blocked Gibbs sampler; one instance per chain.

    ``y`` is (T, B); ``gamma`` the matching ternary zero mask.  Block methods
    update ``self.state`` in place and may be overridden (the Geweke mutation
    fixture does exactly that).
    """

    def __init__(self, y, gamma, hyper: UniHyper | None = None, mode: str = "zero_inflated",
                 seed: int = 0, chain: int = 0, state: UniChainState | None = None):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        self.hyper = hyper or UniHyper()
        self.mode = mode
        y = np.asarray(y, dtype=float)
        gamma = np.asarray(gamma)
        if y.ndim == 1:
            y, gamma = y[:, None], gamma[:, None]
        self.y = np.where(gamma == MISSING, 0.0, y)
        self.gamma = gamma
        self.observed = gamma != MISSING
        if mode == "plain":
            if self.hyper.strict_plain and np.any(gamma == ZERO):
                raise ConfigError("plain mode in strict configuration rejects exact zeros")
            # the baseline reads a zero as an ordinary Gaussian observation
            self.latent = ~self.observed
        else:
            self.latent = gamma != 0
        self.kappa = kappa_from_gamma(gamma)
        self.rng = chain_streams(seed, chain)
        self.state = state.copy() if state is not None else initial_state(self.y, gamma, self.hyper)
        self.iteration = 0

    @property
    def T(self):
        return self.y.shape[0]

    # (1)
    def draw_initial_states(self):
        s, hp, r = self.state, self.hyper, self.rng["initial"]
        # log-odds draws use the zero stream: shared blocks then consume identical
        # randomness with or without zero inflation
        triples = [("theta", s.sigma2_theta, hp.theta0_mean, hp.theta0_var, r),
                   ("h", s.sigma2_h, hp.h0_mean, hp.h0_var, r)]
        if self.mode == "zero_inflated":
            triples.append(("pi", s.sigma2_pi, hp.pi0_mean, hp.pi0_var, self.rng["zero"]))
        for name, q, m0, v0, gen in triples:
            path = getattr(s, name)
            prec = 1.0 / v0 + 1.0 / q
            mean = (m0 / v0 + path[1] / q) / prec
            path[0] = mean + gen.standard_normal(mean.shape) / np.sqrt(prec)

    # (2)
    def draw_static_variances(self):
        s, hp, r = self.state, self.hyper, self.rng["static"]
        half_T = 0.5 * self.T
        s.sigma2_theta = draw_inv_gamma(hp.theta_shape + half_T,
                                        hp.theta_rate + 0.5 * (np.diff(s.theta, axis=0) ** 2).sum(0), r)
        s.sigma2_h = draw_inv_gamma(hp.h_shape + half_T,
                                    hp.h_rate + 0.5 * (np.diff(s.h, axis=0) ** 2).sum(0), r)
        if self.mode == "zero_inflated":
            s.sigma2_pi = draw_inv_gamma(hp.pi_shape + half_T,
                                         hp.pi_rate + 0.5 * (np.diff(s.pi, axis=0) ** 2).sum(0),
                                         self.rng["zero"])

    # (3)
    def draw_trend(self):
        s = self.state
        T, B = s.ystar.shape
        s.theta = rw_posterior_draw(s.ystar, 0.0, np.exp(s.h[1:]), np.ones((T, B), bool),
                                    s.sigma2_theta, s.theta[0], 0.0, self.rng["trend"],
                                    kernel=self.hyper.kernel)

    # (4)
    def draw_sv(self):
        s, r = self.state, self.rng["sv"]
        lin = linearize(s.ystar - s.theta[1:], self.hyper.offset_c)
        s.indicators = draw_indicators(lin, s.h[1:], r)
        s.h = draw_h_path(lin, s.indicators, s.sigma2_h, (s.h[0], 0.0), r, kernel=self.hyper.kernel)

    # (5)
    def draw_zero(self):
        s, r = self.state, self.rng["zero"]
        s.omega = draw_omega(s.pi[1:], self.observed, r)
        s.pi = draw_pi_path(self.kappa, s.omega, self.observed, s.sigma2_pi, (s.pi[0], 0.0), r,
                            kernel=self.hyper.kernel)

    # (6)
    def augment_y_star(self):
        s, r = self.state, self.rng["ystar"]
        fresh = s.theta[1:] + np.exp(0.5 * s.h[1:]) * r.standard_normal(s.ystar.shape)
        s.ystar = np.where(self.latent, fresh, self.y)

    def blocks(self):
        out = [("initial", self.draw_initial_states), ("static", self.draw_static_variances),
               ("trend", self.draw_trend), ("sv", self.draw_sv)]
        if self.mode == "zero_inflated":
            out.append(("zero", self.draw_zero))
        out.append(("ystar", self.augment_y_star))
        return out

    def sweep(self):
        s = self.state
        for name, fn in self.blocks():
            try:
                fn()
            except NumericalError as exc:
                raise NumericalError(str(exc), iteration=self.iteration, block=name) from exc
            _check(name, self.iteration, s.theta, s.h, s.pi, s.ystar,
                   s.sigma2_theta, s.sigma2_h, s.sigma2_pi)
        self.iteration += 1
        return s

    def snapshot(self) -> dict:
        s = self.state
        return {"theta": s.theta, "h": s.h, "pi": s.pi, "ystar": s.ystar,
                "sigma2_theta": s.sigma2_theta, "sigma2_h": s.sigma2_h, "sigma2_pi": s.sigma2_pi}

    def run(self, schedule: Schedule | None = None, callback=None) -> DrawStore:
        schedule = schedule or self.hyper.schedule
        T, B = self.y.shape
        shapes = {"theta": (T + 1, B), "h": (T + 1, B), "pi": (T + 1, B), "ystar": (T, B),
                  "sigma2_theta": (B,), "sigma2_h": (B,), "sigma2_pi": (B,)}
        coll = DrawCollector(schedule, shapes)
        for it in range(schedule.n_iter):
            self.sweep()
            coll.offer(it, self.snapshot())
            if callback is not None:
                callback(it, self)
        return coll.finish("zucsv" if self.mode == "zero_inflated" else "ucsv")


def run_chain(panel: Panel, hyper: UniHyper | None = None, mode: str = "zero_inflated",
              seed: int = 0, chain: int = 0) -> DrawStore:
    """Fit every column of ``panel`` as its own univariate model."""
    gamma = derive_zero_mask(panel).gamma
    sampler = ZUCSVSampler(panel.filled(), gamma, hyper, mode, seed, chain)
    store = sampler.run()
    store.series_names = panel.series_names
    store.time_labels = panel.time_labels
    store.scale_factors = np.array(panel.scale_factors)
    store.meta.update(seed=seed, chain=chain, mode=mode)
    return store
