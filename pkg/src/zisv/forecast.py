"""Posterior-predictive forecasts and out-of-sample evaluation.

Quantiles use one fixed order-statistic rule (see ``order_quantile``) so that
coverage figures are reproducible to the bit.  Intervals whose two endpoints
are both exactly zero are flagged *zero-degenerate* and left out of coverage
counts; the number left out is reported next to each coverage figure.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .draws import DrawStore, Schedule
from .exceptions import ConfigError, EvaluationError
from .panel import Panel, scale_to_common_sd
from .rng import rng_handle, stream_id
from .zero import inv_logit

DEFAULT_BETAS = tuple(float(b) for b in range(10, 100, 10))
MODELS = ("zucsv", "ucsv", "zmucsv", "mucsv")
ZERO_MODELS = ("zucsv", "zmucsv")


def order_quantile(sorted_draws: np.ndarray, q: float) -> np.ndarray:
    """Quantile ``q`` along axis 0 of already sorted draws.

    The rank ``q (R - 1)`` is rounded to the nearest order statistic; an exact
    half rank averages its two neighbours (so the median of an even count is
    the mean of the central pair).
    """
    R = sorted_draws.shape[0]
    pos = q * (R - 1)
    lo = int(np.floor(pos))
    frac = pos - lo
    if abs(frac - 0.5) < 1e-9 and lo + 1 < R:
        return 0.5 * (sorted_draws[lo] + sorted_draws[lo + 1])
    return sorted_draws[min(lo + (frac > 0.5), R - 1)]


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 < beta < 100.0:
        raise ConfigError(f"interval level must lie strictly between 0 and 100, got {beta}")
    return beta


def _bounds(sorted_draws, beta):
    tail = (1.0 - beta / 100.0) / 2.0
    lo = order_quantile(sorted_draws, tail)
    hi = order_quantile(sorted_draws, 1.0 - tail)
    return lo, hi, (lo == 0.0) & (hi == 0.0)


@dataclass
class ForecastSet:
    """Predictive draws ``(R, H, K)`` with medians and central intervals.

    ``intervals[beta]`` is ``(lower, upper, zero_degenerate)``, each (H, K).
    """

    draws: np.ndarray
    medians: np.ndarray
    intervals: dict
    paths: dict = field(default_factory=dict)

    @classmethod
    def from_draws(cls, draws, betas=DEFAULT_BETAS, paths=None) -> "ForecastSet":
        draws = np.asarray(draws, dtype=float)
        if draws.ndim != 3 or draws.shape[0] < 1:
            raise ConfigError("forecast draws must be (R >= 1, H, K)")
        srt = np.sort(draws, axis=0)
        intervals = {_check_beta(b): _bounds(srt, _check_beta(b)) for b in betas}
        return cls(draws, order_quantile(srt, 0.5), intervals, paths or {})

    @property
    def H(self) -> int:
        return self.draws.shape[1]

    @property
    def K(self) -> int:
        return self.draws.shape[2]


def point_forecast(fs: ForecastSet) -> np.ndarray:
    """Elementwise posterior-predictive median; may be exactly zero."""
    return fs.medians


def interval_forecast(fs: ForecastSet, beta: float):
    """Central ``beta`` percent interval: ``(lower, upper, zero_degenerate)``."""
    beta = _check_beta(beta)
    if beta in fs.intervals:
        return fs.intervals[beta]
    return _bounds(np.sort(fs.draws, axis=0), beta)


# ---------------------------------------------------------------------------
# simulation


def _final_state(store: DrawStore) -> dict:
    out = {name: store[name][:, -1] for name in ("theta", "h", "pi")}
    for name in ("sigma2_theta", "sigma2_h", "sigma2_pi", "Sigma_pi", "C"):
        if name in store:
            out[name] = store[name]
    return out


def _rw_forward(x, var, H, rng):
    """H steps of independent (var (R, K)) or correlated (var (R, K, K)) walks."""
    R, K = x.shape
    z = rng.standard_normal((R, H, K))
    if np.ndim(var) == 3:
        lam, vec = np.linalg.eigh(var)
        root = vec * np.sqrt(np.clip(lam, 0.0, None))[:, None, :]
        steps = np.einsum("rij,rhj->rhi", root, z)
    else:
        steps = z * np.sqrt(var)[:, None, :]
    return x[:, None, :] + np.cumsum(steps, axis=1)


def simulate_forecast(store: DrawStore, H: int, rng: np.random.Generator, betas=DEFAULT_BETAS,
                      original_scale: bool = True, keep_paths: bool = False) -> ForecastSet:
    """Push every stored draw ``H`` periods forward and sample the observation.

    Trend, log-volatility and log-odds follow their random walks from the last
    in-sample state; the latent value is Gaussian around the trend with the
    model's covariance; a zero replaces it with probability ``inv_logit(pi)``
    (never, for the plain baselines).
    """
    if H < 1:
        raise ConfigError("forecast horizon must be at least 1")
    fin = _final_state(store)
    theta = _rw_forward(fin["theta"], fin["sigma2_theta"], H, rng)
    h = _rw_forward(fin["h"], fin["sigma2_h"], H, rng)
    z = rng.standard_normal(theta.shape) * np.exp(0.5 * h)
    if "C" in fin:
        # u = C^-1 diag(exp(h/2)) e for each draw
        z = np.linalg.solve(fin["C"][:, None], z[..., None])[..., 0]
    ystar = theta + z
    if store.model in ZERO_MODELS:
        pi = _rw_forward(fin["pi"], fin.get("Sigma_pi", fin.get("sigma2_pi")), H, rng)
        zero = rng.random(theta.shape) < inv_logit(pi)
        y = np.where(zero, 0.0, ystar)
    else:
        pi = None
        y = ystar
    if original_scale and store.scale_factors is not None:
        y = y * np.asarray(store.scale_factors)
    paths = {"theta": theta, "h": h, "pi": pi} if keep_paths else None
    return ForecastSet.from_draws(y, betas, paths)


# ---------------------------------------------------------------------------
# accuracy and calibration


@dataclass
class MaeResult:
    per_series: np.ndarray
    n_cells: np.ndarray
    average: float  # over all evaluable cells


def mae(forecasts, actual) -> MaeResult:
    """Mean absolute error over non-missing (non-NaN) actual values."""
    forecasts = np.asarray(forecasts, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if forecasts.shape != actual.shape:
        raise EvaluationError(f"forecast shape {forecasts.shape} != actual shape {actual.shape}")
    err = np.abs(forecasts - actual)
    ok = ~np.isnan(actual)
    if not ok.any():
        raise EvaluationError("no non-missing actual values to evaluate")
    flat_err = err.reshape(-1, err.shape[-1])
    flat_ok = ok.reshape(-1, ok.shape[-1])
    n = flat_ok.sum(0)
    with np.errstate(invalid="ignore", divide="ignore"):
        per = np.where(flat_ok, flat_err, 0.0).sum(0) / n
    return MaeResult(per, n, float(err[ok].mean()))


def mae_ratio(numerator: MaeResult, denominator: MaeResult) -> np.ndarray:
    """Per-series MAE ratio, e.g. plain model relative to the zero-inflated one."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return numerator.per_series / denominator.per_series


@dataclass
class CalibrationCurve:
    """Coverage counts per level (rows) and series (columns)."""

    betas: np.ndarray
    hits: np.ndarray
    n_eval: np.ndarray
    n_excluded: np.ndarray

    def pooled_over(self, series=None) -> np.ndarray:
        cols = slice(None) if series is None else np.atleast_1d(series)
        n = self.n_eval[:, cols].sum(1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n > 0, self.hits[:, cols].sum(1) / n, np.nan)

    @property
    def pooled(self) -> np.ndarray:
        return self.pooled_over()

    @property
    def per_series(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.n_eval > 0, self.hits / np.maximum(self.n_eval, 1), np.nan)

    @property
    def component_mean(self) -> np.ndarray:
        """Equal weight per series, ignoring series with nothing evaluable."""
        ps = self.per_series
        with np.errstate(invalid="ignore"):
            ok = ~np.isnan(ps)
            return np.where(ok.any(1), np.nansum(ps, 1) / np.maximum(ok.sum(1), 1), np.nan)

    def abs_error(self, series=None) -> float:
        """|empirical - nominal| averaged over levels that have evaluable cells."""
        gap = np.abs(self.pooled_over(series) - self.betas / 100.0)
        return float(np.nanmean(gap)) if np.any(~np.isnan(gap)) else float("nan")


def calibration(pairs, betas=None) -> CalibrationCurve:
    """Coverage of closed intervals over ``(ForecastSet, actual (H, K))`` pairs."""
    pairs = list(pairs)
    if not pairs:
        raise EvaluationError("calibration needs at least one window")
    betas = tuple(pairs[0][0].intervals) if betas is None else tuple(float(b) for b in betas)
    K = pairs[0][0].K
    hits = np.zeros((len(betas), K), dtype=np.int64)
    n_eval = np.zeros_like(hits)
    n_excl = np.zeros_like(hits)
    for fs, actual in pairs:
        actual = np.asarray(actual, dtype=float)
        seen = ~np.isnan(actual)
        for i, b in enumerate(betas):
            lo, hi, deg = interval_forecast(fs, b)
            use = seen & ~deg
            inside = use & (lo <= actual) & (actual <= hi)
            hits[i] += inside.sum(0)
            n_eval[i] += use.sum(0)
            n_excl[i] += (seen & deg).sum(0)
    return CalibrationCurve(np.array(betas), hits, n_eval, n_excl)


# ---------------------------------------------------------------------------
# expanding-window protocol


def window_schedule(T: int, window0: int = 45, H: int = 8, step: int | None = None) -> list:
    """``(train_end, holdout_end)`` pairs; training always starts at period 0."""
    step = H if step is None else step
    if window0 < 2 or H < 1 or step < 1:
        raise ConfigError("need window0 >= 2, H >= 1 and step >= 1")
    if T < window0 + H:
        raise ConfigError(f"{T} periods cannot hold a {window0}-period window plus {H} holdout periods")
    return [(e, e + H) for e in range(window0, T - H + 1, step)]


def default_hyper(model: str, schedule: Schedule | None = None):
    from .zmucsv import MvHyper
    from .zucsv import UniHyper

    kw = {} if schedule is None else {"schedule": schedule}
    return UniHyper(**kw) if model in ("zucsv", "ucsv") else MvHyper(**kw)


def fit_model(panel: Panel, model: str, hyper=None, seed: int = 0, chain: int = 0) -> DrawStore:
    from .zmucsv import run_chain_mv
    from .zucsv import run_chain

    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; expected one of {MODELS}")
    mode = "zero_inflated" if model in ZERO_MODELS else "plain"
    hyper = hyper if hyper is not None else default_hyper(model)
    if model in ("zucsv", "ucsv"):
        return run_chain(panel, hyper, mode, seed, chain)
    return run_chain_mv(panel, hyper, mode, seed, chain)


def _run_window(job):
    w, (end, stop), panel, models, hypers, seed, H, betas = job
    train = scale_to_common_sd(panel.head(end))
    actual = np.where(panel.missing[end:stop], np.nan, panel.filled(0.0)[end:stop] * panel.scale_factors)
    out = {}
    for model in models:
        store = fit_model(train, model, hypers[model], seed=seed, chain=w)
        fs = simulate_forecast(store, H, rng_handle(seed, stream_id(w, "forecast")), betas)
        out[model] = fs
    return w, out, actual


@dataclass
class EvaluationReport:
    models: tuple
    windows: list
    series_names: tuple
    forecasts: dict      # model -> [ForecastSet per window]
    actuals: list        # per window (H, K), NaN where missing
    betas: tuple

    @property
    def abs_errors(self) -> dict:
        """model -> (n_windows, H, K) absolute errors of the median, NaN where missing."""
        act = np.array(self.actuals)
        return {m: np.abs(np.array([f.medians for f in self.forecasts[m]]) - act) for m in self.models}

    def mae(self, model: str) -> MaeResult:
        med = np.array([f.medians for f in self.forecasts[model]])
        return mae(med, np.array(self.actuals))

    def calibration(self, model: str) -> CalibrationCurve:
        return calibration(zip(self.forecasts[model], self.actuals), self.betas)

    def write(self, outdir) -> None:
        """Tidy CSVs: errors, pooled and per-series coverage, MAE ratios, intervals."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        names = self.series_names
        errs = self.abs_errors
        with (outdir / "mae.csv").open("w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["window", "series", "h", "model", "mae"])
            for m in self.models:
                for w in range(len(self.windows)):
                    for h in range(errs[m].shape[1]):
                        for k, name in enumerate(names):
                            v = errs[m][w, h, k]
                            wr.writerow([w + 1, name, h + 1, m, "" if np.isnan(v) else repr(float(v))])
        curves = {m: self.calibration(m) for m in self.models}
        with (outdir / "calibration.csv").open("w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["beta", "model", "empirical_coverage", "n_eval", "n_excluded"])
            for m, cur in curves.items():
                for i, b in enumerate(cur.betas):
                    wr.writerow([_num(b), m, _num(cur.pooled[i]), int(cur.n_eval[i].sum()),
                                 int(cur.n_excluded[i].sum())])
        with (outdir / "calibration_components.csv").open("w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["beta", "model", "series", "empirical_coverage", "n_eval", "n_excluded"])
            for m, cur in curves.items():
                ps = cur.per_series
                for i, b in enumerate(cur.betas):
                    for k, name in enumerate(names):
                        wr.writerow([_num(b), m, name, _num(ps[i, k]), int(cur.n_eval[i, k]),
                                     int(cur.n_excluded[i, k])])
                    wr.writerow([_num(b), m, "component_mean", _num(cur.component_mean[i]),
                                 int(cur.n_eval[i].sum()), int(cur.n_excluded[i].sum())])
        with (outdir / "mae_ratio.csv").open("w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["series", "numerator", "denominator", "mae_numerator", "mae_denominator", "ratio"])
            res = {m: self.mae(m) for m in self.models}
            for a in self.models:
                for b in self.models:
                    if a == b:
                        continue
                    ratio = mae_ratio(res[a], res[b])
                    for k, name in enumerate(names):
                        wr.writerow([name, a, b, _num(res[a].per_series[k]), _num(res[b].per_series[k]),
                                     _num(ratio[k])])
        with (outdir / "intervals.csv").open("w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["window", "model", "series", "h", "beta", "median", "lower", "upper",
                         "zero_degenerate", "actual"])
            for m in self.models:
                for w, fs in enumerate(self.forecasts[m]):
                    for b, (lo, hi, deg) in fs.intervals.items():
                        for h in range(fs.H):
                            for k, name in enumerate(names):
                                wr.writerow([w + 1, m, name, h + 1, _num(b), _num(fs.medians[h, k]),
                                             _num(lo[h, k]), _num(hi[h, k]), int(deg[h, k]),
                                             _num(self.actuals[w][h, k])])


def _num(x) -> str:
    x = float(x)
    return "" if np.isnan(x) else repr(x)


def rolling_protocol(panel: Panel, models=("zmucsv", "mucsv"), hypers: dict | None = None,
                     window0: int = 45, H: int = 8, step: int | None = None, seed: int = 0,
                     schedule: Schedule | None = None, betas=DEFAULT_BETAS,
                     threads: int = 1) -> EvaluationReport:
    """Expanding-window refits with an ``H``-period holdout after each window.

    Each window is rescaled to unit SD on its own training rows; forecasts
    are returned on the panel's original scale.  Windows are independent jobs
    and may run in ``threads`` worker processes without changing any output.
    """
    models = tuple(models)
    for m in models:
        if m not in MODELS:
            raise ConfigError(f"unknown model {m!r}")
    windows = window_schedule(panel.T, window0, H, step)
    hypers = dict(hypers or {})
    for m in models:
        hypers.setdefault(m, default_hyper(m, schedule))
    raw = Panel(panel.unscaled(), panel.missing, panel.series_names, panel.time_labels)
    jobs = [(w, win, raw, models, hypers, seed, H, tuple(betas)) for w, win in enumerate(windows)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_window, jobs))
    else:
        results = [_run_window(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    forecasts = {m: [r[1][m] for r in results] for m in models}
    return EvaluationReport(models, windows, panel.series_names, forecasts,
                            [r[2] for r in results], tuple(float(b) for b in betas))
