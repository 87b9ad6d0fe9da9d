import hashlib
import json
import logging
from typing import List, Optional

from ububu.config.validator import Validator
from ububu.core import RunConfig
from ububu.errors import ConfigError, ParameterError
from ububu.functions import FunctionSet, make_functions
from ububu.models.preconditioned import PreconditionedPotential
from ububu.models.potential import Potential
from ububu.rhmc import RhmcConfig
from ububu.utils import JSON, PATH

logger = logging.getLogger(__name__)

SAMPLER_MODES = {
    "ububu": "exact",
    "ububu-sg": "svrg",
    "ububu-approx": "approx",
    "rhmc": None,
}

DEFAULT_FUNCTIONS = {
    "gaussian": [{"kind": "coordinates"}, {"kind": "norm"}],
    "quartic": [{"kind": "coordinates"}, {"kind": "norm"}],
    "multinomial": [{"kind": "predictive"}],
    "poisson": [{"kind": "coordinates"}],
}

_POSITIVE = {"type": "number", "minimum": 0, "exclusiveMinimum": True}
_COUNT = {"type": "integer", "minimum": 1}
_NON_NEGATIVE_INT = {"type": "integer", "minimum": 0}

EXPERIMENT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-04/schema#",
    "type": "object",
    "properties": {
        "seed": _NON_NEGATIVE_INT,
        "output": {"type": "string", "minLength": 1},
        "model": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["gaussian", "quartic", "multinomial", "poisson"]},
                "dataset": {"type": "string", "minLength": 1},
                "dim": _COUNT,
                "kappa": {"type": "number", "minimum": 1},
                "n_data": _NON_NEGATIVE_INT,
                "beta": {"type": "number", "minimum": 0},
                "n_classes": {"type": "integer", "minimum": 2},
                "n_features": {"type": "integer", "minimum": 2},
                "n_teams": {"type": "integer", "minimum": 2},
                "n_weeks": _COUNT,
                "prior_variance": _POSITIVE,
                "rw_variance": _POSITIVE,
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "sampler": {
            "type": "object",
            "properties": {
                "mode": {"enum": sorted(SAMPLER_MODES)},
                "h0": _POSITIVE,
                "gamma": _POSITIVE,
                "K": _COUNT,
                "N": _COUNT,
                "c_N": _POSITIVE,
                "phi_N": {"type": "number", "minimum": 2, "exclusiveMinimum": True},
                "c_R": {"type": "number", "minimum": 0},
                "B0": _NON_NEGATIVE_INT,
                "B": _NON_NEGATIVE_INT,
                "tau": {"type": "integer", "minimum": 2, "multipleOf": 2},
                "N_b": _COUNT,
                "precondition": {"type": "boolean"},
                "mu0": {"enum": ["map", "gaussian"]},
                "rhmc": {
                    "type": "object",
                    "properties": {
                        "h": _POSITIVE,
                        "E_L": {"type": "number", "minimum": 1},
                        "alpha": {"type": "number", "minimum": 0, "maximum": 1, "exclusiveMaximum": True},
                        "K": _COUNT,
                        "burn_in": _NON_NEGATIVE_INT,
                        "autotune": {"type": "boolean"},
                    },
                    "additionalProperties": False,
                },
            },
            "required": ["mode"],
            "additionalProperties": False,
        },
        "diagnostics": {
            "type": "object",
            "properties": {
                "functions": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {
                            "kind": {"type": "string", "minLength": 1},
                            "indices": {"type": "array", "items": _NON_NEGATIVE_INT},
                            "count": _COUNT,
                        },
                        "required": ["kind"],
                        "additionalProperties": False,
                    },
                },
                "runs": _COUNT,
                "bootstrap": _COUNT,
            },
            "additionalProperties": False,
        },
        "strong_order": {
            "type": "object",
            "properties": {
                "kernel": {"enum": ["ubu", "em", "svrg", "approx"]},
                "stepsizes": {"type": "array", "minItems": 4, "items": _POSITIVE},
                "replicates": _COUNT,
                "duration": _POSITIVE,
                "tau": {"type": "integer", "minimum": 2, "multipleOf": 2},
                "n_b": _COUNT,
            },
            "required": ["kernel", "stepsizes"],
            "additionalProperties": False,
        },
    },
    "required": ["model", "sampler"],
    "additionalProperties": False,
}

_validator: Optional[Validator] = None


def validator() -> Validator:
    global _validator
    if _validator is None:
        _validator = Validator(EXPERIMENT_SCHEMA)
    return _validator


def validate_config(config: JSON) -> dict:
    validator().validate(config)
    sampler = config["sampler"]
    if sampler["mode"] != "rhmc":
        run_config(config)
    elif "rhmc" in sampler:
        rhmc = {k: v for k, v in sampler["rhmc"].items() if k != "autotune"}
        if {"h", "E_L"} <= rhmc.keys():
            _with_path(["sampler", "rhmc"], lambda: RhmcConfig(**rhmc))
    return config


def _reject_constant(name: str):
    raise ConfigError([], f"Invalid JSON: non-finite number {name}")


def load_config(path: str, seed: int = None) -> dict:
    """Parse and validate an experiment file; `seed` overrides the file's seed."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            config = json.load(f, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ConfigError([], f"Invalid JSON at line {e.lineno}: {e.msg}")
    except OSError as e:
        raise ConfigError([], f"Cannot read configuration file: {e}")
    if seed is not None:
        config["seed"] = seed
    config.setdefault("seed", 0)
    return validate_config(config)


def config_hash(config: JSON) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _with_path(prefix: PATH, factory):
    try:
        return factory()
    except ConfigError as e:
        raise ConfigError(prefix + list(e.path), e.msg) from e


def run_config(config: dict, seed: int = None) -> RunConfig:
    sampler = config["sampler"]
    mode = SAMPLER_MODES[sampler["mode"]]
    if mode is None:
        raise ConfigError(["sampler", "mode"], "RHMC has no multilevel run configuration")
    fields = {k: v for k, v in sampler.items() if k not in ("mode", "precondition", "rhmc")}
    fields.setdefault("h0", 0.5)
    fields.setdefault("K", 1)
    fields.setdefault("N", 16)
    fields["seed"] = config.get("seed", 0) if seed is None else seed
    return _with_path(["sampler"], lambda: RunConfig(gradient_mode=mode, **fields))


def rhmc_config(config: dict, potential: Potential, seed: int = None) -> RhmcConfig:
    """RHMC settings; a missing stepsize defaults to 0.5/√M with E_L·h ≈ 1/√m."""
    options = {k: v for k, v in config["sampler"].get("rhmc", {}).items() if k != "autotune"}
    options["seed"] = config.get("seed", 0) if seed is None else seed
    info = potential.hessian_at_min()
    if "h" not in options:
        options["h"] = 0.5 / info.M ** 0.5
    if "E_L" not in options:
        h = options.pop("h")
        return _with_path(["sampler", "rhmc"], lambda: RhmcConfig.for_stepsize(h, info.m, **options))
    return _with_path(["sampler", "rhmc"], lambda: RhmcConfig(**options))


def function_specs(config: dict) -> List[dict]:
    diagnostics = config.get("diagnostics", {})
    return diagnostics.get("functions", DEFAULT_FUNCTIONS[config["model"]["kind"]])


def build_functions(config: dict, potential: Potential) -> FunctionSet:
    """Test functions on the model's original coordinates."""
    base = potential.base if isinstance(potential, PreconditionedPotential) else potential
    functions = []
    for i, spec in enumerate(function_specs(config)):
        options = {k: v for k, v in spec.items() if k != "kind"}
        if spec["kind"] == "predictive":
            options["model"] = base
        try:
            functions.extend(make_functions(spec["kind"], potential.dim, **options))
        except ParameterError as e:
            raise ConfigError(["diagnostics", "functions", i], str(e)) from e
    return FunctionSet(functions)
