from ububu.config.experiment import (
    EXPERIMENT_SCHEMA,
    build_functions,
    config_hash,
    load_config,
    rhmc_config,
    run_config,
    validate_config,
)
from ububu.config.validator import Validator

__all__ = [
    "EXPERIMENT_SCHEMA",
    "Validator",
    "build_functions",
    "config_hash",
    "load_config",
    "rhmc_config",
    "run_config",
    "validate_config",
]
