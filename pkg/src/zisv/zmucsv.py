"""Gibbs sampler for the zero-inflated multivariate UCSV model (and plain MUCSV).

Observation noise at time t has covariance ``C^-1 diag(exp h_t) C^-T`` with
a dense non-singular impact matrix ``C``, so ``u_t = C (y*_t - theta_t)``
has independent components.  The log-odds of zeros follow a random walk
with full innovation covariance ``Sigma_pi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .draws import DrawCollector, DrawStore, Schedule
from .exceptions import ConfigError, NumericalError
from .gauss_ssm import mv_rw_posterior_draw, precision_draw, random_walk_precision
from .panel import MISSING, ZERO, Panel, derive_zero_mask
from .rng import chain_streams, draw_inv_gamma, draw_inv_wishart
from .sv import DEFAULT_OFFSET, draw_h_path, draw_indicators, linearize
from .zero import draw_omega, kappa_from_gamma
from .zucsv import MODES, _logit

# C and exp(h) trade scale, so |det C| itself can be tiny for a healthy state;
# singularity is judged by the condition number instead.  A rejected row is
# redrawn, which samples the row conditional truncated to the regular set.
COND_CEILING = 1e12
C_RETRIES = 8


@dataclass(frozen=True)
class MvHyper:
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
    nu_pi: float | None = None          # default 2K
    S_pi: np.ndarray | None = None      # default I_K
    c_prior_mean: object = "zero"       # "zero", "identity" or a K x K array of row means
    c_prior_var: object = None          # default K^-3.5; scalar, or K x K shared by rows
    offset_c: float = DEFAULT_OFFSET
    schedule: Schedule = field(default_factory=Schedule)
    grid_points: int = 1024

    def __post_init__(self):
        for name in ("theta0_var", "h0_var", "pi0_var", "theta_shape", "theta_rate", "h_shape", "h_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.offset_c < 0:
            raise ConfigError("offset_c must be non-negative")
        if isinstance(self.c_prior_mean, str) and self.c_prior_mean not in ("zero", "identity"):
            raise ConfigError("c_prior_mean must be 'zero', 'identity' or an array")

    def resolve(self, K: int) -> "ResolvedMvPrior":
        nu = 2.0 * K if self.nu_pi is None else float(self.nu_pi)
        S = np.eye(K) if self.S_pi is None else np.asarray(self.S_pi, dtype=float)
        if not nu > K - 1:
            raise ConfigError("nu_pi must exceed K - 1")
        if S.shape != (K, K) or np.any(np.linalg.eigvalsh(S) <= 0):
            raise ConfigError("S_pi must be a K x K SPD matrix")
        if isinstance(self.c_prior_mean, str):
            m = np.zeros((K, K)) if self.c_prior_mean == "zero" else np.eye(K)
        else:
            m = np.asarray(self.c_prior_mean, dtype=float).reshape(K, K)
        v = K ** -3.5 if self.c_prior_var is None else self.c_prior_var
        V = np.eye(K) * v if np.ndim(v) == 0 else np.asarray(v, dtype=float)
        try:
            V_inv = linalg.inv(V)
            linalg.cholesky(V)
        except linalg.LinAlgError as exc:
            raise ConfigError(f"c_prior_var must be SPD: {exc}") from exc
        return ResolvedMvPrior(nu, S, m, V, V_inv)


@dataclass(frozen=True)
class ResolvedMvPrior:
    nu_pi: float
    S_pi: np.ndarray
    c_mean: np.ndarray   # row k is m_k
    c_var: np.ndarray
    c_prec: np.ndarray


@dataclass
class MvChainState:
    theta: np.ndarray
    h: np.ndarray
    pi: np.ndarray
    ystar: np.ndarray
    C: np.ndarray
    Sigma_pi: np.ndarray
    sigma2_theta: np.ndarray
    sigma2_h: np.ndarray
    indicators: np.ndarray | None = None
    omega: np.ndarray | None = None

    def copy(self) -> "MvChainState":
        return replace(self, **{k: (None if v is None else np.array(v, copy=True))
                                for k, v in vars(self).items()})


def obs_precision_at_t(C, h_t) -> np.ndarray:
    """``C' diag(exp(-h_t)) C``; vectorised over leading axes of ``h_t``."""
    C = np.asarray(C, dtype=float)
    h_t = np.asarray(h_t, dtype=float)
    return np.einsum("ki,...k,kj->...ij", C, np.exp(-h_t), C)


# ---------------------------------------------------------------------------
# scalar |r|^T N(r | m, s^2) draw used by the C rows


def _log_abs_power_gauss(x, power, a):
    quad = -0.5 * (x - a) ** 2
    if power == 0:
        return quad
    with np.errstate(divide="ignore"):
        return power * np.log(x) + quad


def _positive_branch(power: float, a: float, n: int):
    """Grid, log-density and log cell masses of ``x^power exp(-(x-a)^2/2)`` on x > 0.

    The density is log-concave with curvature at least 1, so 12 units either
    side of the mode hold all but a negligible tail.  The grid is dense within
    12 local standard deviations of the mode and coarser outside it.
    """
    mode = 0.5 * (a + np.sqrt(a * a + 4.0 * power))
    sd = 1.0 / np.sqrt(1.0 + (power / mode**2 if mode > 0 else 0.0))
    lo_fine, hi_fine = max(0.0, mode - 12.0 * sd), mode + 12.0 * sd
    lo_wide, hi_wide = max(0.0, mode - 12.0), mode + 12.0
    m = n // 4
    parts = []
    # coarse tails only where they extend the fine window by a useful amount
    if lo_fine - lo_wide > 1e-3:
        parts.append(np.linspace(lo_wide, lo_fine, m, endpoint=False))
    parts.append(np.linspace(lo_fine, hi_fine, n))
    if hi_wide - hi_fine > 1e-3:
        parts.append(np.linspace(hi_fine, hi_wide, m + 1)[1:])
    x = np.concatenate(parts)
    lf = _log_abs_power_gauss(x, power, a)
    lcell = np.logaddexp(lf[:-1], lf[1:]) + np.log(0.5 * np.diff(x))
    top = lcell.max()
    return x, lf, lcell, top + np.log(np.exp(lcell - top).sum())


def _sample_cell(x, lf, lcell, u):
    """Inverse CDF of a piecewise-linear density on grid ``x``."""
    shift = lcell.max()
    cm = np.cumsum(np.exp(lcell - shift))
    target = u * cm[-1]
    j = min(int(np.searchsorted(cm, target)), cm.size - 1)
    prev = cm[j - 1] if j > 0 else 0.0
    width = x[j + 1] - x[j]
    f0, f1 = np.exp(lf[j] - shift), np.exp(lf[j + 1] - shift)
    need = (target - prev) / width  # mass to cover, per unit width, scaled to density units
    # solve f0 t + (f1 - f0) t^2 / 2 = need for t in [0, 1]
    slope = f1 - f0
    if abs(slope) < 1e-12 * max(f0, f1, 1e-300):
        t = need / f0 if f0 > 0 else 0.5
    else:
        disc = max(f0 * f0 + 2.0 * slope * need, 0.0)
        t = (np.sqrt(disc) - f0) / slope
    return x[j] + width * min(max(t, 0.0), 1.0)


def draw_abs_power_gauss(power: float, m: float, s: float, rng: np.random.Generator, n: int = 1024) -> float:
    """Draw r with density proportional to ``|r|^power exp(-(r - m)^2 / (2 s^2))``."""
    a = m / s
    pos = _positive_branch(power, a, n)
    neg = _positive_branch(power, -a, n)
    lp = pos[3] - np.logaddexp(pos[3], neg[3])
    u_branch, u = rng.random(2)
    if np.log(u_branch) < lp:
        x = _sample_cell(pos[0], pos[1], pos[2], u)
    else:
        x = -_sample_cell(neg[0], neg[1], neg[2], u)
    return s * x


def draw_C_row(C, k, row_prec, row_lin, power, rng, n_grid=1024):
    """Exact conditional draw of row ``k`` of ``C``.

    The row conditional is ``N(mu, P^-1)`` (``P = row_prec``,
    ``P mu = row_lin``) times ``|det C|^power``.  ``det C`` is linear in the
    row: ``det C = c_k . w`` up to a constant, with ``w`` the k-th column of
    ``C^-1``.  Along ``w`` the density is ``|r|^power`` times a Gaussian in
    ``r = c_k . w``; orthogonally it stays Gaussian.
    """
    K = C.shape[0]
    L = linalg.cholesky(row_prec, lower=True)
    mu = linalg.cho_solve((L, True), row_lin)
    e_k = np.zeros(K)
    e_k[k] = 1.0
    w = linalg.solve(C, e_k)
    w /= np.linalg.norm(w)
    v = linalg.solve_triangular(L, w, lower=True)
    s = np.linalg.norm(v)
    unit = v / s
    m = mu @ w
    r = draw_abs_power_gauss(power, m, s, rng, n_grid)
    g = rng.standard_normal(K)
    z = (r - m) / s * unit + (g - unit * (unit @ g))
    return mu + linalg.solve_triangular(L, z, lower=True, trans="T")


def _batched_lower_solve(L, b):
    """Solve ``L x = b`` for a stack of lower-triangular ``L`` (forward substitution)."""
    x = np.empty_like(b)
    for i in range(b.shape[-1]):
        x[..., i] = (b[..., i] - np.einsum("tj,tj->t", L[:, i, :i], x[..., :i])) / L[:, i, i]
    return x


def _batched_upper_solve_T(L, b):
    """Solve ``L' x = b`` for a stack of lower-triangular ``L`` (back substitution)."""
    K = b.shape[-1]
    x = np.empty_like(b)
    for i in range(K - 1, -1, -1):
        x[..., i] = (b[..., i] - np.einsum("tj,tj->t", L[:, i + 1:, i], x[..., i + 1:])) / L[:, i, i]
    return x


# ---------------------------------------------------------------------------


def initial_state_mv(y, gamma) -> MvChainState:
    T, K = y.shape
    observed = gamma != MISSING
    nonzero = observed & (gamma != ZERO)
    y0 = np.where(observed, y, 0.0)
    theta_init = np.cumsum(y0, axis=0) / np.arange(1, T + 1)[:, None]
    h_init = np.zeros(K)
    for k in range(K):
        v = y[nonzero[:, k], k]
        if v.size >= 2 and v.var(ddof=1) > 0:
            h_init[k] = np.log(v.var(ddof=1))
    frac = np.clip((gamma == ZERO).sum(0) / np.maximum(observed.sum(0), 1), 1e-12, 1 - 1e-12)
    pi_init = np.clip(_logit(frac), -4.0, 4.0)
    return MvChainState(
        theta=np.vstack([theta_init[:1], theta_init]),
        h=np.tile(h_init, (T + 1, 1)),
        pi=np.tile(pi_init, (T + 1, 1)),
        ystar=np.where(nonzero, y, theta_init),
        C=np.eye(K),
        Sigma_pi=np.eye(K),
        sigma2_theta=np.zeros(K),
        sigma2_h=np.zeros(K),
    )


class ZMUCSVSampler:
    """Blocked Gibbs sampler for a T x K panel; one instance per chain."""

    def __init__(self, y, gamma, hyper: MvHyper | None = None, mode: str = "zero_inflated",
                 seed: int = 0, chain: int = 0, state: MvChainState | None = None):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        self.hyper = hyper or MvHyper()
        self.mode = mode
        y = np.asarray(y, dtype=float)
        gamma = np.asarray(gamma)
        self.y = np.where(gamma == MISSING, 0.0, y)
        self.gamma = gamma
        T, K = y.shape
        self.prior = self.hyper.resolve(K)
        self.observed = gamma != MISSING
        self.latent = ~self.observed if mode == "plain" else gamma != 0
        self.kappa = kappa_from_gamma(gamma)
        self.rng = chain_streams(seed, chain)
        if state is None:
            state = initial_state_mv(self.y, gamma)
            hp = self.hyper
            state.sigma2_theta[:] = hp.theta_rate / (hp.theta_shape - 1) if hp.theta_shape > 1 else hp.theta_rate
            state.sigma2_h[:] = hp.h_rate / (hp.h_shape - 1) if hp.h_shape > 1 else hp.h_rate
            nu, S = self.prior.nu_pi, self.prior.S_pi
            state.Sigma_pi = S / (nu - K - 1) if nu > K + 1 else S.copy()
        self.state = state.copy()
        self.iteration = 0

    @property
    def T(self):
        return self.y.shape[0]

    @property
    def K(self):
        return self.y.shape[1]

    # (1)
    def draw_initial_states(self):
        s, hp, r = self.state, self.hyper, self.rng["initial"]
        for name, q, m0, v0 in (("theta", s.sigma2_theta, hp.theta0_mean, hp.theta0_var),
                                ("h", s.sigma2_h, hp.h0_mean, hp.h0_var)):
            path = getattr(s, name)
            prec = 1.0 / v0 + 1.0 / q
            mean = (m0 / v0 + path[1] / q) / prec
            path[0] = mean + r.standard_normal(self.K) / np.sqrt(prec)
        if self.mode == "zero_inflated":
            Q_inv = linalg.inv(s.Sigma_pi)
            prec = np.eye(self.K) / hp.pi0_var + Q_inv
            L = linalg.cholesky(prec, lower=True)
            mean = linalg.cho_solve((L, True), hp.pi0_mean / hp.pi0_var + Q_inv @ s.pi[1])
            # log-odds randomness lives on the zero stream so that the shared blocks see
            # identical draws with or without zero inflation
            z = self.rng["zero"].standard_normal(self.K)
            s.pi[0] = mean + linalg.solve_triangular(L, z, lower=True, trans="T")

    # (2)
    def draw_static_variances(self):
        s, hp, r = self.state, self.hyper, self.rng["static"]
        half_T = 0.5 * self.T
        s.sigma2_theta = draw_inv_gamma(hp.theta_shape + half_T,
                                        hp.theta_rate + 0.5 * (np.diff(s.theta, axis=0) ** 2).sum(0), r)
        s.sigma2_h = draw_inv_gamma(hp.h_shape + half_T,
                                    hp.h_rate + 0.5 * (np.diff(s.h, axis=0) ** 2).sum(0), r)
        if self.mode == "zero_inflated":
            self.draw_sigma_pi()

    def draw_sigma_pi(self):
        s = self.state
        d = np.diff(s.pi, axis=0)
        s.Sigma_pi = draw_inv_wishart(self.prior.nu_pi + self.T, self.prior.S_pi + d.T @ d, self.rng["zero"])

    # (3)
    def draw_trend(self):
        s = self.state
        P = obs_precision_at_t(s.C, s.h[1:])
        lin = np.einsum("tij,tj->ti", P, s.ystar)
        spec = random_walk_precision(self.T, np.diag(s.sigma2_theta), s.theta[0], 0.0, P, lin)
        s.theta[1:] = precision_draw(spec, self.rng["trend"])

    # (4)
    def draw_sv(self):
        s, r = self.state, self.rng["sv"]
        u = (s.ystar - s.theta[1:]) @ s.C.T
        lin = linearize(u, self.hyper.offset_c)
        s.indicators = draw_indicators(lin, s.h[1:], r)
        s.h = draw_h_path(lin, s.indicators, s.sigma2_h, (s.h[0], 0.0), r)

    # (5)
    def draw_zero(self):
        s, r = self.state, self.rng["zero"]
        s.omega = draw_omega(s.pi[1:], self.observed, r)
        w = np.where(self.observed, s.omega, 0.0)
        prec = w[:, :, None] * np.eye(self.K)
        s.pi = mv_rw_posterior_draw(s.Sigma_pi, s.pi[0], 0.0, prec, self.kappa, r)

    # (6)
    def augment_y_star(self):
        """Draw the latent entries of each y*_t from their Gaussian conditional.

        With precision ``P_t`` the conditional of the latent block Z given the
        observed block O has precision ``P_ZZ`` and mean
        ``theta_Z - P_ZZ^-1 P_ZO (y_O - theta_O)``.  Padding ``P_ZZ`` with the
        identity on O gives a fixed-size K x K system per t, so all times are
        solved in one batched call.
        """
        s, r = self.state, self.rng["ystar"]
        lat = self.latent
        theta = s.theta[1:]
        P = obs_precision_at_t(s.C, s.h[1:])
        both = lat[:, :, None] & lat[:, None, :]
        M = np.where(both, P, np.eye(self.K))
        e_obs = np.where(lat, 0.0, self.y - theta)
        b = np.where(lat, -np.einsum("tij,tj->ti", P, e_obs), 0.0)
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"conditional precision of latent entries is singular: {exc}") from exc
        z = r.standard_normal((self.T, self.K))
        half = _batched_lower_solve(L, b)
        dev = _batched_upper_solve_T(L, half + z)
        s.ystar = np.where(lat, theta + dev, self.y)

    # (7)
    def draw_C(self):
        s, r = self.state, self.rng["C"]
        pr = self.prior
        e = s.ystar - s.theta[1:]
        A = np.einsum("tk,ti,tj->kij", np.exp(-s.h[1:]), e, e)
        lin_prior = pr.c_prec @ pr.c_mean.T  # column k is V^-1 m_k
        C = s.C.copy()
        for k in range(self.K):
            prec = A[k] + pr.c_prec
            for _attempt in range(C_RETRIES):
                row = draw_C_row(C, k, prec, lin_prior[:, k], self.T, r, self.hyper.grid_points)
                trial = C.copy()
                trial[k] = row
                if np.linalg.cond(trial) < COND_CEILING:
                    C = trial
                    break
            else:
                raise NumericalError(f"C ill-conditioned (cond >= {COND_CEILING:g}) after {C_RETRIES} retries of row {k}")
        s.C = C

    def blocks(self):
        out = [("initial", self.draw_initial_states), ("static", self.draw_static_variances),
               ("trend", self.draw_trend), ("sv", self.draw_sv)]
        if self.mode == "zero_inflated":
            out.append(("zero", self.draw_zero))
        out += [("ystar", self.augment_y_star), ("C", self.draw_C)]
        return out

    def sweep(self):
        s = self.state
        for name, fn in self.blocks():
            try:
                fn()
            except (NumericalError, linalg.LinAlgError) as exc:
                raise NumericalError(str(exc), iteration=self.iteration, block=name) from exc
            for a in (s.theta, s.h, s.pi, s.ystar, s.C, s.Sigma_pi, s.sigma2_theta, s.sigma2_h):
                if not np.all(np.isfinite(a)):
                    raise NumericalError("non-finite state", iteration=self.iteration, block=name)
        self.iteration += 1
        return s

    def snapshot(self) -> dict:
        s = self.state
        return {"theta": s.theta, "h": s.h, "pi": s.pi, "ystar": s.ystar, "sigma2_theta": s.sigma2_theta,
                "sigma2_h": s.sigma2_h, "Sigma_pi": s.Sigma_pi, "C": s.C}

    def run(self, schedule: Schedule | None = None, callback=None) -> DrawStore:
        schedule = schedule or self.hyper.schedule
        T, K = self.y.shape
        shapes = {"theta": (T + 1, K), "h": (T + 1, K), "pi": (T + 1, K), "ystar": (T, K),
                  "sigma2_theta": (K,), "sigma2_h": (K,), "Sigma_pi": (K, K), "C": (K, K)}
        coll = DrawCollector(schedule, shapes)
        for it in range(schedule.n_iter):
            self.sweep()
            coll.offer(it, self.snapshot())
            if callback is not None:
                callback(it, self)
        return coll.finish("zmucsv" if self.mode == "zero_inflated" else "mucsv")


def run_chain_mv(panel: Panel, hyper: MvHyper | None = None, mode: str = "zero_inflated",
                 seed: int = 0, chain: int = 0) -> DrawStore:
    gamma = derive_zero_mask(panel).gamma
    sampler = ZMUCSVSampler(panel.filled(), gamma, hyper, mode, seed, chain)
    store = sampler.run()
    store.series_names = panel.series_names
    store.time_labels = panel.time_labels
    store.scale_factors = np.array(panel.scale_factors)
    store.meta.update(seed=seed, chain=chain, mode=mode)
    return store
