"""Zero-inflated unobserved-components stochastic-volatility models.

Univariate (``ZUCSVSampler``) and multivariate (``ZMUCSVSampler``) Gibbs
samplers for series that mix exact zeros with continuous values, their plain
Gaussian baselines, posterior-predictive forecasting and the expanding-window
evaluation protocol.
"""

from .draws import DrawStore, Schedule
from .exceptions import ConfigError, EvaluationError, NumericalError, PanelError
from .forecast import (
    CalibrationCurve,
    EvaluationReport,
    ForecastSet,
    calibration,
    interval_forecast,
    mae,
    point_forecast,
    rolling_protocol,
    simulate_forecast,
)
from .panel import MISSING, NONZERO, ZERO, Panel, derive_zero_mask, load_panel, scale_to_common_sd
from .synthetic import SyntheticSpec, simulate
from .zmucsv import MvHyper, ZMUCSVSampler, run_chain_mv
from .zucsv import UniHyper, ZUCSVSampler, run_chain

__all__ = [
    "CalibrationCurve", "ConfigError", "DrawStore", "EvaluationError", "EvaluationReport", "ForecastSet",
    "MISSING", "MvHyper", "NONZERO", "NumericalError", "Panel", "PanelError", "Schedule", "SyntheticSpec",
    "UniHyper", "ZERO", "ZMUCSVSampler", "ZUCSVSampler", "calibration", "derive_zero_mask",
    "interval_forecast", "load_panel", "mae", "point_forecast", "rolling_protocol", "run_chain",
    "run_chain_mv", "scale_to_common_sd", "simulate", "simulate_forecast",
]
