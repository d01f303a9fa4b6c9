"""Linear-Gaussian random-walk state-space kernels.

Two exact samplers for the same family of targets:

* :func:`ffbs_draw` - forward filtering, backward sampling in moment form for
  scalar random walks (vectorised over any number of independent series).
* :func:`precision_draw` - joint draw from a block-tridiagonal Gaussian
  precision using a banded Cholesky factor (LAPACK ``pbtrf``/``tbtrs``).
  Storage is the ``2K x T*K`` lower band, so memory is O(T K^2) and the dense
  inverse is never formed.

:func:`rw_posterior_draw` is the entry point used by the Gibbs blocks; it
draws a whole scalar random-walk path with either kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg
from scipy.linalg.lapack import dtbtrs

from .exceptions import NumericalError

VAR_FLOOR = 1e-300


@dataclass(frozen=True)
class RwSsmSpec:
    """Scalar random walk observed with heteroskedastic Gaussian noise.

    ``obs[t] = obs_mean_offset[t] + x[t] + N(0, obs_var[t])`` for t = 1..T
    (array index t-1), ``x[t] = x[t-1] + N(0, state_var)``,
    ``x[0] ~ N(init_mean, init_var)``.  Trailing axes after the time axis are
    independent batch dimensions.  ``init_var = 0`` conditions on a known
    ``x[0]``.
    """

    obs_mean_offset: np.ndarray
    obs_var: np.ndarray
    state_var: np.ndarray | float
    init_mean: np.ndarray | float
    init_var: np.ndarray | float
    obs_present: np.ndarray

    def __post_init__(self):
        present = np.asarray(self.obs_present, dtype=bool)
        if np.any(np.asarray(self.state_var) <= 0):
            raise ValueError("state_var must be positive")
        if np.any(np.asarray(self.init_var) < 0):
            raise ValueError("init_var must be non-negative")
        ov = np.broadcast_to(np.asarray(self.obs_var, dtype=float), present.shape)
        if np.any(~(ov[present] > 0)):
            raise ValueError("obs_var must be positive where observations are present")

    @property
    def T(self) -> int:
        return np.shape(self.obs_present)[0]


def ffbs_draw(spec: RwSsmSpec, obs, rng: np.random.Generator) -> np.ndarray:
    """Exact joint draw of ``x[0..T]`` given the observations.

    Returns an array of shape ``(T + 1,) + batch``.  Times with
    ``obs_present`` false are pure prediction steps.
    """
    present = np.asarray(spec.obs_present, dtype=bool)
    T = present.shape[0]
    batch = present.shape[1:]
    obs = np.asarray(obs, dtype=float)
    resid = np.where(present, obs - np.broadcast_to(spec.obs_mean_offset, present.shape), 0.0)
    r = np.broadcast_to(np.asarray(spec.obs_var, dtype=float), present.shape)
    q = np.broadcast_to(np.asarray(spec.state_var, dtype=float), batch)

    m = np.empty((T + 1,) + batch)
    P = np.empty((T + 1,) + batch)
    m[0] = spec.init_mean
    P[0] = spec.init_var
    for t in range(1, T + 1):
        pp = P[t - 1] + q
        pres = present[t - 1]
        rt = np.where(pres, r[t - 1], 1.0)
        gain = np.where(pres, pp / (pp + rt), 0.0)
        m[t] = m[t - 1] + gain * (resid[t - 1] - m[t - 1])
        P[t] = np.where(pres, pp * rt / (pp + rt), pp)
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(P))):
        raise NumericalError("non-finite filter moments in FFBS")

    z = rng.standard_normal((T + 1,) + batch)
    x = np.empty((T + 1,) + batch)
    x[T] = m[T] + np.sqrt(np.maximum(P[T], 0.0)) * z[T]
    for t in range(T - 1, -1, -1):
        denom = np.maximum(P[t] + q, VAR_FLOOR)
        mean = m[t] + P[t] / denom * (x[t + 1] - m[t])
        var = P[t] * q / denom
        x[t] = mean + np.sqrt(np.maximum(var, 0.0)) * z[t]
    return x


@dataclass(frozen=True)
class BlockPrecisionSpec:
    """Gaussian ``N(P^{-1} b, P^{-1})`` with block-tridiagonal ``P``.

    ``prior_diag`` (T, K, K) and ``prior_lower`` (T-1, K, K) hold the prior
    precision (``prior_lower[t]`` is block ``(t+1, t)``); ``obs_prec`` (T, K, K)
    is added to the diagonal; ``linear`` (T, K) is ``b`` in time-major order.
    """

    prior_diag: np.ndarray
    prior_lower: np.ndarray
    obs_prec: np.ndarray
    linear: np.ndarray

    @property
    def T(self) -> int:
        return self.prior_diag.shape[0]

    @property
    def K(self) -> int:
        return self.prior_diag.shape[1]

    def dense(self) -> np.ndarray:
        """Assemble the full (T*K)^2 precision.  Testing aid only."""
        T, K = self.T, self.K
        P = np.zeros((T * K, T * K))
        for t in range(T):
            P[t * K:(t + 1) * K, t * K:(t + 1) * K] = self.prior_diag[t] + self.obs_prec[t]
        for t in range(T - 1):
            P[(t + 1) * K:(t + 2) * K, t * K:(t + 1) * K] = self.prior_lower[t]
            P[t * K:(t + 1) * K, (t + 1) * K:(t + 2) * K] = self.prior_lower[t].T
        return P


def random_walk_precision(T, state_cov, init_mean, init_cov, obs_prec=None, obs_linear=None):
    """Precision form of a K-variate random walk ``x[1..T]``.

    The initial state ``x[0] ~ N(init_mean, init_cov)`` is integrated out, so
    ``x[1] ~ N(init_mean, init_cov + state_cov)``.  With ``init_cov = 0`` this
    is the random walk conditional on a known ``x[0] = init_mean``.
    """
    state_cov = np.atleast_2d(np.asarray(state_cov, dtype=float))
    K = state_cov.shape[0]
    init_mean = np.broadcast_to(np.asarray(init_mean, dtype=float), (K,))
    init_cov = np.asarray(init_cov, dtype=float)
    if init_cov.ndim < 2:
        init_cov = np.eye(K) * init_cov
    q_inv = linalg.cho_solve((linalg.cholesky(state_cov, lower=True), True), np.eye(K))
    first_cov = init_cov + state_cov
    first_chol = linalg.cholesky(first_cov, lower=True)
    first_inv = linalg.cho_solve((first_chol, True), np.eye(K))

    diag = np.broadcast_to(2.0 * q_inv, (T, K, K)).copy()
    diag[-1] = q_inv
    diag[0] += first_inv - q_inv
    lower = np.broadcast_to(-q_inv, (max(T - 1, 0), K, K)).copy()
    linear = np.zeros((T, K))
    linear[0] = first_inv @ init_mean
    if obs_linear is not None:
        linear = linear + np.asarray(obs_linear, dtype=float).reshape(T, K)
    if obs_prec is None:
        obs_prec = np.zeros((T, K, K))
    return BlockPrecisionSpec(diag, lower, np.asarray(obs_prec, dtype=float), linear)


def diagonal_random_walk_precision(state_var, init_mean, init_var, obs_prec, obs_linear):
    """Vectorised :func:`random_walk_precision` for K independent scalar walks.

    All arguments are per-series; ``obs_prec`` and ``obs_linear`` are (T, K).
    Avoids K x K inversions when every block is diagonal.
    """
    obs_prec = np.asarray(obs_prec, dtype=float)
    T, K = obs_prec.shape
    q_inv = 1.0 / np.broadcast_to(np.asarray(state_var, dtype=float), (K,))
    first_inv = 1.0 / (np.broadcast_to(np.asarray(init_var, dtype=float), (K,)) + 1.0 / q_inv)
    d = np.broadcast_to(2.0 * q_inv, (T, K)).copy()
    d[-1] = q_inv
    d[0] += first_inv - q_inv
    eye = np.eye(K)
    diag = d[:, :, None] * eye
    lower = np.broadcast_to(-q_inv[:, None] * eye, (max(T - 1, 0), K, K))
    linear = np.asarray(obs_linear, dtype=float).copy()
    linear[0] += first_inv * np.broadcast_to(np.asarray(init_mean, dtype=float), (K,))
    return BlockPrecisionSpec(diag, lower, obs_prec[:, :, None] * eye, linear)


def independent_walks_draw(state_var, init_mean, init_var, obs_prec, obs_linear,
                           rng: np.random.Generator) -> np.ndarray:
    """Draw ``x[1..T]`` for K independent scalar walks; returns (T, K).

    Same target as :func:`diagonal_random_walk_precision` followed by
    :func:`precision_draw`, but the series are laid out one after another
    so the joint precision is a single tridiagonal band of width 1.
    """
    obs_prec = np.asarray(obs_prec, dtype=float)
    T, K = obs_prec.shape
    q_inv = 1.0 / np.broadcast_to(np.asarray(state_var, dtype=float), (K,))
    first_inv = 1.0 / (np.broadcast_to(np.asarray(init_var, dtype=float), (K,)) + 1.0 / q_inv)
    d = np.empty((K, T))
    d[:] = 2.0 * q_inv[:, None]
    d[:, -1] = q_inv
    d[:, 0] += first_inv - q_inv
    d += obs_prec.T
    ab = np.zeros((2, K * T))
    ab[0] = d.ravel()
    off = np.zeros((K, T))
    off[:, :-1] = -q_inv[:, None]
    ab[1] = off.ravel()
    b = np.asarray(obs_linear, dtype=float).T.copy()
    b[:, 0] += first_inv * np.broadcast_to(np.asarray(init_mean, dtype=float), (K,))
    try:
        cb = linalg.cholesky_banded(ab, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"tridiagonal precision is not positive definite: {exc}") from exc
    mean = linalg.cho_solve_banded((cb, True), b.ravel())
    dev, info = dtbtrs(cb, rng.standard_normal((K * T, 1)), uplo="L", trans="T")
    if info != 0:
        raise NumericalError(f"banded triangular solve failed (info={info})")
    return (mean + dev[:, 0]).reshape(K, T).T


@lru_cache(maxsize=64)
def _band_index(T: int, K: int):
    a, b = np.tril_indices(K)
    diag_rows = np.broadcast_to(a - b, (T, a.size))
    diag_cols = np.arange(T)[:, None] * K + b[None, :]
    aa, bb = np.meshgrid(np.arange(K), np.arange(K), indexing="ij")
    aa, bb = aa.ravel(), bb.ravel()
    low_rows = np.broadcast_to(K + aa - bb, (max(T - 1, 0), aa.size))
    low_cols = np.arange(max(T - 1, 0))[:, None] * K + bb[None, :]
    return (a, b, diag_rows, diag_cols), (aa, bb, low_rows, low_cols)


def band_storage(spec: BlockPrecisionSpec) -> np.ndarray:
    """Lower band storage ``ab[i - j, j] = P[i, j]`` with 2K rows."""
    T, K = spec.T, spec.K
    (a, b, dr, dc), (aa, bb, lr, lc) = _band_index(T, K)
    ab = np.zeros((2 * K, T * K))
    full_diag = spec.prior_diag + spec.obs_prec
    ab[dr, dc] = full_diag[:, a, b]
    if T > 1:
        ab[lr, lc] = spec.prior_lower[:, aa, bb]
    return ab


def precision_draw(spec: BlockPrecisionSpec, rng: np.random.Generator, return_mean: bool = False):
    """Exact draw from ``N(P^{-1} b, P^{-1})``; returns a (T, K) array.

    The stacked time-major vector is ``out.ravel()``.  With
    ``return_mean=True`` the posterior mean is returned as well.
    """
    T, K = spec.T, spec.K
    ab = band_storage(spec)
    try:
        cb = linalg.cholesky_banded(ab, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"banded precision is not positive definite: {exc}") from exc
    b = spec.linear.reshape(T * K)
    mean = linalg.cho_solve_banded((cb, True), b)
    z = rng.standard_normal((T * K, 1))
    dev, info = dtbtrs(cb, z, uplo="L", trans="T")
    if info != 0:
        raise NumericalError(f"banded triangular solve failed (info={info})")
    x = (mean + dev[:, 0]).reshape(T, K)
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite draw from precision sampler")
    if return_mean:
        return x, mean.reshape(T, K)
    return x


def _as_tk(x, T, K):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and x.shape[0] == T:
        x = x[:, None]
    return np.broadcast_to(x, (T, K))


def rw_posterior_draw(
    obs,
    obs_offset,
    obs_var,
    present,
    state_var,
    init_mean,
    init_var,
    rng: np.random.Generator,
    kernel: str = "precision",
) -> np.ndarray:
    """Draw ``x[0..T]`` for one or more independent scalar random walks.

    Shapes follow :class:`RwSsmSpec`: time first, then an optional series
    axis.  With ``init_var > 0`` the precision kernel draws ``x[1..T]`` with
    ``x[0]`` integrated out and then ``x[0] | x[1]`` exactly.
    """
    present = np.asarray(present, dtype=bool)
    squeeze = present.ndim == 1
    if squeeze:
        present = present[:, None]
    T, K = present.shape
    obs = _as_tk(obs, T, K)
    offset = _as_tk(obs_offset, T, K)
    r = _as_tk(obs_var, T, K)
    q = np.broadcast_to(np.asarray(state_var, dtype=float).ravel(), (K,))
    m0 = np.broadcast_to(np.asarray(init_mean, dtype=float).ravel(), (K,))
    v0 = np.broadcast_to(np.asarray(init_var, dtype=float).ravel(), (K,))

    if kernel == "ffbs":
        spec = RwSsmSpec(offset, np.where(present, r, 1.0), q, m0, v0, present)
        path = ffbs_draw(spec, obs, rng)
    elif kernel == "precision":
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(present, 1.0 / np.where(present, r, 1.0), 0.0)
        lin = np.where(present, w * (obs - offset), 0.0)
        path = np.empty((T + 1, K))
        path[1:] = independent_walks_draw(q, m0, v0, w, lin, rng)
        known = v0 == 0
        path[0] = m0
        if not np.all(known):
            prec0 = np.where(known, 1.0, 1.0 / np.where(known, 1.0, v0) + 1.0 / q)
            mean0 = (np.where(known, 0.0, m0 / np.where(known, 1.0, v0)) + path[1] / q) / prec0
            draw0 = mean0 + rng.standard_normal(K) / np.sqrt(prec0)
            path[0] = np.where(known, m0, draw0)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    if not np.all(np.isfinite(path)):
        raise NumericalError("non-finite random-walk path")
    return path[:, 0] if squeeze else path


def mv_rw_posterior_draw(state_cov, init_mean, init_cov, obs_prec, obs_linear,
                         rng: np.random.Generator) -> np.ndarray:
    """Draw ``x[0..T]`` of a K-variate random walk with Gaussian pseudo-data.

    ``obs_prec`` (T, K, K) and ``obs_linear`` (T, K) are the data's
    contribution to the precision and to ``b``.  A zero ``init_cov``
    conditions on ``x[0] = init_mean``; otherwise ``x[0] | x[1]`` is drawn
    exactly after the path.
    """
    obs_linear = np.asarray(obs_linear, dtype=float)
    T, K = obs_linear.shape
    Q = np.atleast_2d(np.asarray(state_cov, dtype=float))
    m0 = np.broadcast_to(np.asarray(init_mean, dtype=float), (K,))
    V0 = np.asarray(init_cov, dtype=float)
    if V0.ndim < 2:
        V0 = np.eye(K) * V0
    spec = random_walk_precision(T, Q, m0, V0, obs_prec, obs_linear)
    path = np.empty((T + 1, K))
    path[1:] = precision_draw(spec, rng)
    if not np.any(V0):
        path[0] = m0
        return path
    try:
        V0_inv = linalg.inv(V0)
        Q_inv = linalg.inv(Q)
        prec = V0_inv + Q_inv
        chol = linalg.cholesky(prec, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"initial-state precision is not positive definite: {exc}") from exc
    mean = linalg.cho_solve((chol, True), V0_inv @ m0 + Q_inv @ path[1])
    path[0] = mean + linalg.solve_triangular(chol, rng.standard_normal(K), lower=True, trans="T")
    return path
