"""Optimal-transport filtering and minimum transport-loss estimation for linear state-space models."""

from .api import OTEstimator, OTFilter
from .estimator import LossConfig, OptimizerOptions, filter_at, optimize
from .exceptions import ConfigError, NumericalError, OTFError
from .inference import se_correct, se_robust, spec_test, wchi2_quantile
from .otf import CoupledOutput, kalman_filter, run_otf, transport_map
from .particle import run_particle_otf, sinkhorn
from .ssm import eval_model, get_builtin, simulate, solve_steady_kf
from .varsieve import DataSet, fit_var, select_lags

__version__ = "0.1.0"

__all__ = [
    "OTEstimator", "OTFilter", "LossConfig", "OptimizerOptions", "filter_at", "optimize",
    "ConfigError", "NumericalError", "OTFError", "se_correct", "se_robust", "spec_test",
    "wchi2_quantile", "CoupledOutput", "kalman_filter", "run_otf", "transport_map",
    "run_particle_otf", "sinkhorn", "eval_model", "get_builtin", "simulate", "solve_steady_kf",
    "DataSet", "fit_var", "select_lags",
]
