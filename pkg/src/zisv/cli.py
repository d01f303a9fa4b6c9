"""Command-line entry point: ``zisv {fit,forecast,evaluate,simulate,geweke}``.

Exit codes: 0 success, 1 sampler failure (or a failed Geweke check),
2 usage, configuration or I/O error.  Every randomised command needs an
explicit seed; identical inputs and seed give byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import SCHEMA, RunConfig, read_config
from .draws import DrawStore, blob_hash
from .exceptions import ConfigError, EvaluationError, NumericalError, PanelError
from .forecast import fit_model, order_quantile, rolling_protocol, simulate_forecast
from .panel import IngestOptions, load_panel, scale_to_common_sd, write_panel
from .rng import rng_handle, stream_id
from .synthetic import SyntheticSpec, simulate
from .zero import inv_logit

COMMAND_KEYS = {
    "fit": ("data", "delimiter", "missing_tokens", "scale", "out", "model", "seed", "chains", "threads",
            "n_iter", "burn_in", "thin", "theta0_mean", "theta0_var", "h0_mean", "h0_var", "pi0_mean",
            "pi0_var", "theta_shape", "theta_rate", "h_shape", "h_rate", "pi_shape", "pi_rate", "nu_pi",
            "s_pi", "c_prior_mean", "c_prior_var", "offset_c"),
    "forecast": ("draws", "out", "seed", "horizon", "betas"),
    "evaluate": ("data", "delimiter", "missing_tokens", "out", "models", "seed", "threads", "n_iter",
                 "burn_in", "thin", "horizon", "window0", "step", "betas", "theta0_mean", "theta0_var",
                 "h0_mean", "h0_var", "pi0_mean", "pi0_var", "theta_shape", "theta_rate", "h_shape",
                 "h_rate", "pi_shape", "pi_rate", "nu_pi", "s_pi", "c_prior_mean", "c_prior_var", "offset_c"),
    "simulate": ("out", "seed", "T", "K", "sigma2_theta", "sigma2_h", "sigma2_pi", "zero_prevalence",
                 "theta0", "h0", "missing_prob"),
    "geweke": ("out", "model", "seed", "T", "K", "sweeps", "marginal", "mutate"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zisv", description="Zero-inflated UCSV models: fit, forecast, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMAND_KEYS.items():
        p = sub.add_parser(name, help=(globals()[f"cmd_{name}"].__doc__ or "").strip().splitlines()[0])
        p.add_argument("--config", help="flat key = value config file; flags override its values")
        for key in keys:
            spec = SCHEMA[key]
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, metavar="VALUE",
                           help=spec.help + (f" (default {spec.default})" if spec.default not in (None, "") else ""))
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = read_config(args.config) if args.config else {}
    allowed = set(COMMAND_KEYS[args.command])
    stray = set(file_values) - allowed
    if stray:
        raise ConfigError(f"keys not used by {args.command}: {', '.join(sorted(stray))}")
    overrides = {k: getattr(args, k) for k in allowed if getattr(args, k, None) is not None}
    if "threads" in allowed and "threads" not in overrides and os.environ.get("ZISV_THREADS"):
        overrides["threads"] = os.environ["ZISV_THREADS"]
    return RunConfig.build(file_values, overrides)


def _write_manifest(path: Path, command: str, cfg: RunConfig, inputs=(), extra=None) -> None:
    doc = {"command": command, "config": cfg.manifest(),
           "inputs": {str(p): blob_hash(p) for p in inputs}, **(extra or {})}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load(cfg: RunConfig):
    path = Path(cfg["data"])
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    tokens = tuple(dict.fromkeys(("",) + tuple(cfg["missing_tokens"])))  # an empty cell is always missing
    return load_panel(path, IngestOptions(delimiter=cfg["delimiter"], missing_tokens=tokens))


def _num(x) -> str:
    x = float(x)
    return "" if np.isnan(x) else repr(x)


# ---------------------------------------------------------------------------
# fit


def _fit_job(job):
    panel, model, hyper, seed, chain = job
    return fit_model(panel, model, hyper, seed=seed, chain=chain)


def _pool_map(fn, jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _summary_rows(stores, zero_model: bool):
    sf = np.asarray(stores[0].scale_factors, dtype=float)
    theta = np.concatenate([s["theta"][:, 1:] for s in stores]) * sf
    vol = np.exp(0.5 * np.concatenate([s["h"][:, 1:] for s in stores])) * sf
    p = inv_logit(np.concatenate([s["pi"][:, 1:] for s in stores])) if zero_model else None
    stats = []
    for arr in (theta, vol) + ((p,) if zero_model else ()):
        srt = np.sort(arr, axis=0)
        stats.append((arr.mean(0), order_quantile(srt, 0.05), order_quantile(srt, 0.95)))
    names, labels = stores[0].series_names, stores[0].time_labels
    T, K = theta.shape[1:]
    for k in range(K):
        for t in range(T):
            row = [names[k], labels[t], t + 1]
            for mean, lo, hi in stats:
                row += [_num(mean[t, k]), _num(lo[t, k]), _num(hi[t, k])]
            if not zero_model:
                row += ["", "", ""]
            yield row


def cmd_fit(cfg: RunConfig) -> int:
    """Run MCMC chains and write draws, manifests and a posterior summary."""
    cfg.require("data", "out", "seed")
    raw = _load(cfg)
    panel = scale_to_common_sd(raw) if cfg["scale"] else raw
    model = cfg["model"]
    hyper = cfg.hyper(model, panel.K)
    jobs = [(panel, model, hyper, cfg["seed"], c) for c in range(cfg["chains"])]
    stores = _pool_map(_fit_job, jobs, cfg["threads"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for c, store in enumerate(stores):
        store.write(out, f"draws_chain{c + 1}", inputs=[cfg["data"]], extra_meta={"config": cfg.manifest()})
    with (out / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "time", "t_index", "theta_mean", "theta_q05", "theta_q95",
                    "vol_mean", "vol_q05", "vol_q95", "p_mean", "p_q05", "p_q95"])
        w.writerows(_summary_rows(stores, model in ("zucsv", "zmucsv")))
    _write_manifest(out / "fit.manifest.json", "fit", cfg, [cfg["data"]],
                    {"chains": [f"draws_chain{c + 1}" for c in range(len(stores))]})
    print(f"fit: {len(stores)} chain(s) x {stores[0].n_draws} draws of {model} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# forecast


def _read_chains(folder: Path) -> DrawStore:
    stems = sorted(p.name[: -len(".manifest.json")] for p in folder.glob("draws_chain*.manifest.json"))
    if not stems:
        raise ConfigError(f"no draws_chain*.manifest.json found in {folder}")
    stores = [DrawStore.read(folder, s) for s in stems]
    first = stores[0]
    arrays = {k: np.concatenate([s[k] for s in stores]) for k in first.arrays}
    iters = np.concatenate([s.iterations for s in stores])
    return DrawStore(first.model, arrays, iters, first.series_names, first.time_labels,
                     first.scale_factors, dict(first.meta))


def cmd_forecast(cfg: RunConfig) -> int:
    """Simulate the posterior predictive from stored draws; write medians and intervals."""
    cfg.require("draws", "out", "seed")
    folder = Path(cfg["draws"])
    store = _read_chains(folder)
    fs = simulate_forecast(store, cfg["horizon"], rng_handle(cfg["seed"], stream_id(0, "forecast")), cfg["betas"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with (out / "forecast.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "h", "median", "beta", "lower", "upper", "zero_degenerate"])
        for k, name in enumerate(store.series_names):
            for h in range(fs.H):
                for b, (lo, hi, deg) in fs.intervals.items():
                    w.writerow([name, h + 1, _num(fs.medians[h, k]), _num(b), _num(lo[h, k]), _num(hi[h, k]),
                                int(deg[h, k])])
    inputs = sorted(folder.glob("draws_chain*"))
    _write_manifest(out / "forecast.manifest.json", "forecast", cfg, inputs, {"model": store.model,
                                                                             "n_draws": store.n_draws})
    print(f"forecast: {fs.H} periods from {store.n_draws} draws of {store.model} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(cfg: RunConfig) -> int:
    """Expanding-window out-of-sample comparison of two models."""
    cfg.require("data", "out", "seed")
    panel = _load(cfg)
    hypers = {m: cfg.hyper(m, panel.K) for m in cfg["models"]}
    rep = rolling_protocol(panel, cfg["models"], hypers, window0=cfg["window0"], H=cfg["horizon"],
                           step=cfg["step"], seed=cfg["seed"], betas=cfg["betas"], threads=cfg["threads"])
    out = Path(cfg["out"])
    rep.write(out)
    _write_manifest(out / "evaluate.manifest.json", "evaluate", cfg, [cfg["data"]],
                    {"windows": [list(w) for w in rep.windows]})
    for m in rep.models:
        print(f"evaluate: {m} average MAE {rep.mae(m).average:.4f} over {len(rep.windows)} windows")
    return 0


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg: RunConfig) -> int:
    """Simulate a panel from the generative model; write it with the latent truth."""
    cfg.require("out", "seed")
    K = cfg["K"] or 1
    prev = cfg["zero_prevalence"]
    spec = SyntheticSpec(T=cfg["T"] or 120, K=K, sigma2_theta=cfg["sigma2_theta"], sigma2_h=cfg["sigma2_h"],
                         sigma2_pi=cfg["sigma2_pi"], zero_prevalence=prev[0] if len(prev) == 1 else prev,
                         theta0=cfg["theta0"], h0=cfg["h0"], missing_prob=cfg["missing_prob"])
    panel, truth = simulate(spec, rng_handle(cfg["seed"]))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_panel(panel, out / "panel.csv")
    with (out / "truth.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "series", "t_index", "value"])
        for name in ("theta", "h", "pi", "ystar", "p", "gamma"):
            arr = truth[name]
            first = 0 if name in ("theta", "h", "pi") else 1
            for k in range(K):
                for t in range(arr.shape[0]):
                    w.writerow([name, panel.series_names[k], t + first, _num(arr[t, k])])
    _write_manifest(out / "simulate.manifest.json", "simulate", cfg)
    print(f"simulate: T={panel.T} K={panel.K} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# geweke


def cmd_geweke(cfg: RunConfig) -> int:
    """Joint-distribution test of a zero-inflated sampler at small dimensions."""
    from .geweke import geweke_mv, geweke_uni

    cfg.require("out", "seed")
    model = cfg["model"]
    if model not in ("zucsv", "zmucsv"):
        raise ConfigError("geweke checks the zero-inflated samplers: model must be zucsv or zmucsv")
    if model == "zucsv":
        T = cfg["T"] or 12
        if T > 12 or (cfg["K"] or 1) != 1:
            raise ConfigError("the univariate Geweke test runs with T <= 12 and K = 1")
        n_chains = 100
        res = geweke_uni(T=T, n_chains=n_chains, n_sweeps=max(cfg["sweeps"] // n_chains, 1), seed=cfg["seed"],
                         n_marginal=cfg["marginal"], mutate=cfg["mutate"], t_index=min(5, T))
    else:
        T, K = cfg["T"] or 8, cfg["K"] or 2
        if T > 12 or K > 2:
            raise ConfigError("the multivariate Geweke test runs with T <= 12 and K <= 2")
        res = geweke_mv(K=K, T=T, n_sweeps=cfg["sweeps"], n_marginal=cfg["marginal"], seed=cfg["seed"],
                        mutate=cfg["mutate"], t_index=min(5, T), missing_cell=(min(3, T), 1))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with (out / "geweke.csv").open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(res.to_csv_rows())
    _write_manifest(out / "geweke.manifest.json", "geweke", cfg, extra={"pass_fraction": res.pass_fraction,
                                                                       "passed": res.passed})
    print(f"geweke: {res.pass_fraction:.1%} of {len(res.rows)} statistics with |z| < 4 "
          f"-> {'PASS' if res.passed else 'FAIL'}")
    return 0 if res.passed else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return globals()[f"cmd_{args.command}"](cfg)
    except NumericalError as exc:
        print(f"zisv {args.command}: sampler failure: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, PanelError, EvaluationError, OSError) as exc:
        print(f"zisv {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
