from ububu.core import NoiseKey, RunConfig, WorkLedger, derive_seed
from ububu.diagnostics import ess, lyapunov_oracle, strong_order_fit, variance_breakdown
from ububu.errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DiagnosticsError,
    Error,
    InstabilityError,
    ModelError,
    NumericalError,
    ParameterError,
)
from ububu.estimator import (
    EstimatorReport,
    make_schedule,
    run_ensemble,
    run_estimator,
    run_ububu,
    run_ububu_approx,
    run_ububu_sg,
)
from ububu.functions import FunctionSet, make_functions
from ububu.rhmc import RhmcConfig, autotune, run_rhmc

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "DiagnosticsError",
    "Error",
    "EstimatorReport",
    "FunctionSet",
    "InstabilityError",
    "ModelError",
    "NoiseKey",
    "NumericalError",
    "ParameterError",
    "RhmcConfig",
    "RunConfig",
    "WorkLedger",
    "autotune",
    "derive_seed",
    "ess",
    "lyapunov_oracle",
    "make_functions",
    "make_schedule",
    "run_ensemble",
    "run_estimator",
    "run_rhmc",
    "run_ububu",
    "run_ububu_approx",
    "run_ububu_sg",
    "strong_order_fit",
    "variance_breakdown",
]
