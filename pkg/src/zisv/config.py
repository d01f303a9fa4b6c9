"""Flat, typed run configuration shared by every command.

A config file is plain ``key = value`` lines (``#`` starts a comment)::

    model = zmucsv
    data = cpi.csv
    seed = 7
    n_iter = 12000

Every key is listed in ``SCHEMA`` with its type and default; anything else is
rejected before computation starts.  Command-line flags override file values.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ConfigError

MODEL_CHOICES = ("zucsv", "ucsv", "zmucsv", "mucsv")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _words(text: str) -> tuple:
    return tuple(x.strip() for x in text.split(",") if x.strip())


@dataclass(frozen=True)
class Key:
    kind: type | object
    default: object
    help: str
    choices: tuple | None = None


# name -> (parser, default, help).  None as default means "unset".
SCHEMA: dict[str, Key] = {
    # data and output
    "data": Key(str, None, "input panel CSV"),
    "delimiter": Key(str, ",", "field delimiter of the input CSV"),
    "missing_tokens": Key(_words, ("", "NA", "NaN"), "comma-separated cell values read as missing"),
    "scale": Key(_bool, True, "rescale every series to unit SD before fitting"),
    "out": Key(str, None, "output directory"),
    "draws": Key(str, None, "directory holding draws written by fit"),
    # run control
    "model": Key(str, "zmucsv", "model to fit", MODEL_CHOICES),
    "models": Key(_words, ("zmucsv", "mucsv"), "model pair compared by evaluate"),
    "seed": Key(int, None, "random seed (required by randomised commands)"),
    "chains": Key(int, 1, "number of chains"),
    "threads": Key(int, 1, "worker processes (env ZISV_THREADS)"),
    "n_iter": Key(int, 12000, "MCMC iterations per chain"),
    "burn_in": Key(int, 2000, "iterations discarded at the start"),
    "thin": Key(int, 20, "keep every thin-th post-burn-in iteration"),
    # priors
    "theta0_mean": Key(float, 0.0, "prior mean of the initial trend"),
    "theta0_var": Key(float, 10.0, "prior variance of the initial trend"),
    "h0_mean": Key(float, 0.0, "prior mean of the initial log-volatility"),
    "h0_var": Key(float, 1.0, "prior variance of the initial log-volatility"),
    "pi0_mean": Key(float, 0.0, "prior mean of the initial log-odds of a zero"),
    "pi0_var": Key(float, 1.0, "prior variance of the initial log-odds of a zero"),
    "theta_shape": Key(float, 11.0, "inverse-gamma shape of the trend innovation variance"),
    "theta_rate": Key(float, 1.0, "inverse-gamma scale of the trend innovation variance"),
    "h_shape": Key(float, 101.0, "inverse-gamma shape of the volatility innovation variance"),
    "h_rate": Key(float, 1.0, "inverse-gamma scale of the volatility innovation variance"),
    "pi_shape": Key(float, 11.0, "inverse-gamma shape of the log-odds variance (univariate)"),
    "pi_rate": Key(float, 1.0, "inverse-gamma scale of the log-odds variance (univariate)"),
    "nu_pi": Key(float, None, "inverse-Wishart degrees of freedom for the log-odds covariance (default 2K)"),
    "s_pi": Key(float, 1.0, "inverse-Wishart scale multiple of the identity"),
    "c_prior_mean": Key(str, "zero", "prior mean of the impact-matrix rows", ("zero", "identity")),
    "c_prior_var": Key(float, None, "prior variance of impact-matrix entries (default K^-3.5)"),
    "offset_c": Key(float, 1e-4, "offset inside log(residual^2 + offset)"),
    # forecasting and evaluation
    "horizon": Key(int, 8, "forecast horizon H"),
    "window0": Key(int, 45, "length of the first training window"),
    "step": Key(int, None, "periods between windows (default H)"),
    "betas": Key(_floats, tuple(float(b) for b in range(10, 100, 10)), "interval levels in percent"),
    # simulation
    "T": Key(int, None, "periods (simulate: 120; geweke: 12 univariate, 8 multivariate)"),
    "K": Key(int, None, "series (simulate: 1; geweke: 2 for the multivariate model)"),
    "sigma2_theta": Key(float, 0.01, "true trend innovation variance"),
    "sigma2_h": Key(float, 0.01, "true volatility innovation variance"),
    "sigma2_pi": Key(float, 0.0, "true log-odds innovation variance"),
    "zero_prevalence": Key(_floats, (0.2,), "starting zero probability, one value or one per series"),
    "theta0": Key(float, 0.0, "true initial trend"),
    "h0": Key(float, 0.0, "true initial log-volatility"),
    "missing_prob": Key(float, 0.0, "probability that a simulated cell is missing"),
    # Geweke harness
    "sweeps": Key(int, 200_000, "Gibbs sweeps of the successive-conditional simulator"),
    "marginal": Key(int, 200_000, "prior draws of the marginal-conditional simulator"),
    "mutate": Key(_bool, False, "run the deliberately broken sampler (harness self-check)"),
}


def parse_value(key: str, text) -> object:
    spec = SCHEMA[key]
    if not isinstance(text, str):
        return text
    try:
        value = spec.kind(text.strip()) if spec.kind is not str else text.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if spec.choices is not None and value not in spec.choices:
        raise ConfigError(f"{key} must be one of {spec.choices}, got {value!r}")
    return value


def read_config(path) -> dict:
    """Parse a flat config file, rejecting unknown keys and duplicates."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       comment_prefixes=("#",), strict=True)
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    if len(parser.sections()) != 1:
        raise ConfigError(f"config {path} must be flat (no [sections])")
    out = {}
    for key, raw in parser["run"].items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r} in {path}")
        out[key] = parse_value(key, raw)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings: schema defaults, then file values, then overrides."""

    values: dict

    @classmethod
    def build(cls, file_values: dict | None = None, overrides: dict | None = None) -> "RunConfig":
        vals = {k: spec.default for k, spec in SCHEMA.items()}
        for source in (file_values or {}, overrides or {}):
            for k, v in source.items():
                if k not in SCHEMA:
                    raise ConfigError(f"unknown config key {k!r}")
                if v is not None:
                    vals[k] = parse_value(k, v)
        cfg = cls(vals)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def validate(self) -> None:
        v = self.values
        for key in ("chains", "threads", "n_iter", "thin", "horizon", "window0", "T", "K", "sweeps", "marginal"):
            if v[key] is not None and v[key] < 1:
                raise ConfigError(f"{key} must be at least 1")
        if v["burn_in"] < 0 or v["burn_in"] >= v["n_iter"]:
            raise ConfigError("burn_in must satisfy 0 <= burn_in < n_iter")
        for m in v["models"]:
            if m not in MODEL_CHOICES:
                raise ConfigError(f"models: unknown model {m!r}")
        if any(not 0 < b < 100 for b in v["betas"]):
            raise ConfigError("betas must lie strictly between 0 and 100")

    def require(self, *keys) -> None:
        for key in keys:
            if self.values[key] is None:
                raise ConfigError(f"{key} is required (config file key or --{key.replace('_', '-')})")

    def schedule(self):
        from .draws import Schedule

        return Schedule(self["n_iter"], self["burn_in"], self["thin"])

    def hyper(self, model: str, K: int):
        """Prior and schedule object for ``model`` with these settings."""
        import numpy as np

        from .zmucsv import MvHyper
        from .zucsv import UniHyper

        v = self.values
        common = {k: v[k] for k in ("theta0_mean", "theta0_var", "h0_mean", "h0_var", "pi0_mean", "pi0_var",
                                    "theta_shape", "theta_rate", "h_shape", "h_rate", "offset_c")}
        common["schedule"] = self.schedule()
        if model in ("zucsv", "ucsv"):
            return UniHyper(pi_shape=v["pi_shape"], pi_rate=v["pi_rate"], **common)
        return MvHyper(nu_pi=v["nu_pi"], S_pi=v["s_pi"] * np.eye(K), c_prior_mean=v["c_prior_mean"],
                       c_prior_var=v["c_prior_var"], **common)

    def manifest(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.values.items()}
