"""Seeded random streams and the sampling distributions used by the Gibbs blocks.

Every stochastic routine in the package takes an explicit
``numpy.random.Generator``.  Generators are derived from a ``(seed,
stream_id)`` pair through ``numpy.random.SeedSequence`` spawn keys, so two
distinct stream ids give statistically independent streams without any
coordination between them.  Within a chain the layout is
``stream_id = chain_index * 2**16 + block_index``.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.special import log_ndtr

STREAM_STRIDE = 2**16

# Block indices used for per-block streams inside a chain.
BLOCK_STREAMS = {
    "initial": 0,
    "static": 1,
    "trend": 2,
    "sv": 3,
    "zero": 4,
    "ystar": 5,
    "C": 6,
    "forecast": 7,
}


def rng_handle(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Return the generator for ``(seed, stream_id)``.

    Identical pairs reproduce identical draw sequences bit for bit.
    """
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


def stream_id(chain: int, block: int | str) -> int:
    if isinstance(block, str):
        block = BLOCK_STREAMS[block]
    return int(chain) * STREAM_STRIDE + int(block)


def chain_streams(seed: int, chain: int = 0) -> dict[str, np.random.Generator]:
    """One independent generator per sampler block of a chain."""
    return {name: rng_handle(seed, stream_id(chain, idx)) for name, idx in BLOCK_STREAMS.items()}


# ---------------------------------------------------------------------------
# Inverse gamma / inverse Wishart / Gaussian


def draw_inv_gamma(alpha, beta, rng: np.random.Generator, size=None):
    """Draw from IG(alpha, beta) with density proportional to x^-(alpha+1) exp(-beta/x).

    ``alpha`` and ``beta`` broadcast; both must be strictly positive.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(~(alpha > 0)) or np.any(~(beta > 0)):
        raise ValueError("inverse gamma requires alpha > 0 and beta > 0")
    out = beta / rng.gamma(alpha, 1.0, size=size if size is not None else np.broadcast(alpha, beta).shape)
    return out if np.ndim(out) else float(out)


def draw_inv_wishart(nu: float, scale, rng: np.random.Generator) -> np.ndarray:
    """Draw Sigma ~ IW(nu, scale) via the Bartlett factor of its Wishart dual.

    If ``Sigma^{-1} ~ W(nu, scale^{-1})`` and ``scale^{-1} = L L'``, then
    ``Sigma^{-1} = (L A)(L A)'`` with ``A`` the Bartlett lower-triangular
    factor, hence ``Sigma = M^{-T} M^{-1}`` with ``M = L A``.
    """
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    K = scale.shape[0]
    if scale.shape != (K, K):
        raise ValueError("scale must be square")
    if not nu > K - 1:
        raise ValueError(f"inverse Wishart requires nu > K - 1 (nu={nu}, K={K})")
    try:
        scale_chol = linalg.cholesky(scale, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError("inverse Wishart scale is not positive definite") from exc
    # chol(S^{-1}) = (chol(S)^{-T}) up to an orthogonal factor; use the lower
    # factor of S^{-1} directly for a clean Bartlett construction.
    scale_inv = linalg.cho_solve((scale_chol, True), np.eye(K))
    L = linalg.cholesky(0.5 * (scale_inv + scale_inv.T), lower=True)

    A = np.zeros((K, K))
    A[np.diag_indices(K)] = np.sqrt(rng.chisquare(nu - np.arange(K)))
    rows, cols = np.tril_indices(K, -1)
    A[rows, cols] = rng.standard_normal(rows.size)

    M = L @ A
    M_inv = linalg.solve_triangular(M, np.eye(K), lower=True)
    sigma = M_inv.T @ M_inv
    return 0.5 * (sigma + sigma.T)


def draw_mvn(mean, mat, rng: np.random.Generator, mode: str = "covariance") -> np.ndarray:
    """Exact Gaussian draw given a covariance or a precision matrix.

    In precision mode the draw is ``mean + L^{-T} z`` with ``P = L L'``; the
    inverse of ``P`` is never formed.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    try:
        chol = linalg.cholesky(mat, lower=True)
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError(f"{mode} matrix is not positive definite") from exc
    z = rng.standard_normal(mean.shape[0])
    if mode == "covariance":
        return mean + chol @ z
    if mode == "precision":
        return mean + linalg.solve_triangular(chol, z, lower=True, trans="T")
    raise ValueError(f"unknown mode {mode!r}")


def draw_bernoulli(p, rng: np.random.Generator):
    p = np.asarray(p, dtype=float)
    return rng.random(p.shape) < p


# ---------------------------------------------------------------------------
# Polya-Gamma PG(1, c)
#
# Devroye-style exact sampler for J*(1, z) with z = |c| / 2; PG(1, c) is
# J*(1, c/2) / 4.  Proposals come from a two-piece envelope (inverse Gaussian
# left of the truncation point, exponential right of it) and are accepted with
# the alternating-series test on the Jacobi density coefficients.

_TRUNC = 0.64
_PI2_8 = np.pi**2 / 8.0


def _series_coef(n: int, x: np.ndarray) -> np.ndarray:
    """n-th coefficient of the alternating series for the J*(1, 0) density."""
    k = (n + 0.5) * np.pi
    out = np.empty_like(x)
    right = x > _TRUNC
    out[right] = k * np.exp(-0.5 * k * k * x[right])
    xl = x[~right]
    out[~right] = np.exp(
        np.log(k) - 1.5 * (np.log(0.5 * np.pi) + np.log(xl)) - 2.0 * (n + 0.5) ** 2 / xl
    )
    return out


def _left_mass_ratio(z: np.ndarray) -> np.ndarray:
    """Probability of the exponential (right) piece of the envelope."""
    t = _TRUNC
    fz = _PI2_8 + 0.5 * z * z
    b = np.sqrt(1.0 / t) * (t * z - 1.0)
    a = -np.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = np.log(fz) + fz * t
    xb = x0 - z + log_ndtr(b)
    xa = x0 + z + log_ndtr(a)
    q_over_p = 4.0 / np.pi * (np.exp(xb) + np.exp(xa))
    return 1.0 / (1.0 + q_over_p)


def _truncated_inv_gauss(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """IG(mu = 1/z, shape 1) restricted to (0, TRUNC); z = 0 gives the Levy limit."""
    t = _TRUNC
    out = np.empty_like(z)
    with np.errstate(divide="ignore"):
        mu = np.where(z > 0, 1.0 / np.maximum(z, 1e-300), np.inf)

    # mu > t: propose from the truncated Levy density, accept w.p. exp(-z^2 x / 2).
    pending = np.flatnonzero(mu > t)
    while pending.size:
        e1 = rng.standard_exponential(pending.size)
        e2 = rng.standard_exponential(pending.size)
        bad = e1 * e1 > 2.0 * e2 / t
        while np.any(bad):
            nb = int(bad.sum())
            e1[bad] = rng.standard_exponential(nb)
            e2[bad] = rng.standard_exponential(nb)
            bad = e1 * e1 > 2.0 * e2 / t
        x = t / (1.0 + t * e1) ** 2
        zz = z[pending]
        accept = rng.random(pending.size) <= np.exp(-0.5 * zz * zz * x)
        out[pending[accept]] = x[accept]
        pending = pending[~accept]

    # mu <= t: untruncated inverse Gaussian draws, rejected until below t.
    pending = np.flatnonzero(mu <= t)
    while pending.size:
        m = mu[pending]
        y = rng.standard_normal(pending.size) ** 2
        x = m + 0.5 * m * m * y - 0.5 * m * np.sqrt(4.0 * m * y + (m * y) ** 2)
        flip = rng.random(pending.size) > m / (m + x)
        x[flip] = m[flip] ** 2 / x[flip]
        ok = x < t
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
    return out


def draw_pg1(c, rng: np.random.Generator):
    """Exact draws from the Polya-Gamma distribution PG(1, c).

    Parameters
    ----------
    c : float or array_like
        Tilting parameter(s); any finite reals.  The output has the same shape.
    rng : numpy.random.Generator

    Returns
    -------
    float or ndarray
        Strictly positive draws with mean ``tanh(c/2) / (2c)`` (1/4 at c = 0).
    """
    c_arr = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c_arr)):
        raise ValueError("PG tilt must be finite")
    z = 0.5 * np.abs(c_arr).ravel()
    out = np.empty_like(z)
    pending = np.arange(z.size)
    while pending.size:
        zz = z[pending]
        n = pending.size
        fz = _PI2_8 + 0.5 * zz * zz
        use_exp = rng.random(n) < _left_mass_ratio(zz)
        x = np.empty(n)
        x[use_exp] = _TRUNC + rng.standard_exponential(int(use_exp.sum())) / fz[use_exp]
        if not np.all(use_exp):
            x[~use_exp] = _truncated_inv_gauss(zz[~use_exp], rng)

        s = _series_coef(0, x)
        y = rng.random(n) * s
        accepted = np.zeros(n, dtype=bool)
        undecided = np.ones(n, dtype=bool)
        k = 0
        while np.any(undecided):
            k += 1
            idx = np.flatnonzero(undecided)
            coef = _series_coef(k, x[idx])
            if k % 2 == 1:
                s[idx] -= coef
                hit = y[idx] <= s[idx]
                accepted[idx[hit]] = True
                undecided[idx[hit]] = False
            else:
                s[idx] += coef
                miss = y[idx] > s[idx]
                undecided[idx[miss]] = False
        out[pending[accepted]] = 0.25 * x[accepted]
        pending = pending[~accepted]
    if c_arr.ndim == 0:
        return float(out[0])
    return out.reshape(c_arr.shape)


def pg1_mean(c):
    """Analytic mean of PG(1, c)."""
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-6
    safe = np.where(small, 1.0, c)
    out = np.where(small, 0.25 - c * c / 48.0, np.tanh(0.5 * safe) / (2.0 * safe))
    return out if out.ndim else float(out)


def pg1_variance(c):
    """Analytic variance of PG(1, c) (used only for Monte-Carlo error bars)."""
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-3
    safe = np.where(small, 1.0, c)
    # Var = (sinh(c) - c) / (4 c^3 cosh^2(c/2)) ; limit 1/24 at 0.
    big = (np.sinh(safe) - safe) / (4.0 * safe**3 * np.cosh(0.5 * safe) ** 2)
    out = np.where(small, 1.0 / 24.0, big)
    return out if out.ndim else float(out)
