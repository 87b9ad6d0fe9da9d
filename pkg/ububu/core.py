import logging
import math
from dataclasses import dataclass, fields, replace
from enum import IntEnum
from typing import Optional, Tuple, Union

import numpy as np

from ububu.errors import ConfigError, NumericalError, ParameterError

logger = logging.getLogger(__name__)

GRADIENT_MODES = ("exact", "svrg", "approx")
INITIAL_LAWS = ("map", "gaussian")

# Richardson parameter, schedule constants and the per-level variance decay
# rate used by the burn-in defaults, per gradient mode.
MODE_DEFAULTS = {
    "exact": {"c_R": 0.25, "c_N": 1 / 16, "phi_N": 4.0, "phi_D": 16.0},
    "svrg": {"c_R": 1 / (2 * math.sqrt(2)), "c_N": 1 / 64, "phi_N": 4.0, "phi_D": 8.0},
    "approx": {"c_R": 0.5, "c_N": 1 / 64, "phi_N": 2 * math.sqrt(2), "phi_D": 4.0},
}

APPROX_TAU = 40
MASK64 = 2 ** 64 - 1


class Stream(IntEnum):
    LEVEL_ZERO = 0
    PAIRWISE = 1
    TAIL = 2
    SCHEDULE = 3
    RHMC = 4
    DATA = 5
    DIAGNOSTICS = 6


class Slot(IntEnum):
    GAUSS = 0
    BATCH = 1
    COIN = 2
    START = 3
    PROPOSAL = 4
    TUNING = 5


@dataclass
class PhaseState:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.x.ndim != 1 or self.x.shape != self.v.shape or self.x.size == 0:
            raise ParameterError(f"Position and velocity must be non-empty vectors of equal length, "
                                 f"got {self.x.shape} and {self.v.shape}")

    @property
    def dim(self) -> int:
        return self.x.size

    def copy(self) -> "PhaseState":
        return PhaseState(self.x.copy(), self.v.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v)))

    def check_finite(self, context: str) -> "PhaseState":
        if not self.is_finite():
            raise NumericalError(f"{context}: non-finite phase state")
        return self

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.x, self.v])


@dataclass(frozen=True)
class WeightedNormParams:
    a: float
    b: float

    def __post_init__(self):
        if not self.a > 0 or not self.b > 0:
            raise ParameterError("Weighted norm parameters must be positive")
        if self.b ** 2 >= self.a:
            raise ParameterError(f"Weighted norm is not positive-definite: b²={self.b ** 2} ≥ a={self.a}")

    @classmethod
    def default(cls, M: float, gamma: float) -> "WeightedNormParams":
        return cls(a=1 / M, b=1 / gamma)


def weighted_norm_sq(z: PhaseState, p: WeightedNormParams) -> float:
    """‖x‖² + 2b⟨x, v⟩ + a‖v‖²."""
    if z.x.shape != z.v.shape:
        raise ParameterError(f"Dimension mismatch between x {z.x.shape} and v {z.v.shape}")
    return float(z.x @ z.x + 2 * p.b * (z.x @ z.v) + p.a * (z.v @ z.v))


@dataclass(frozen=True)
class NoiseKey:
    """Address of one draw in the counter-based random stream.

    Equal keys give equal draws; keys differing in any field give independent
    draws. The key is turned into a Philox bit generator through a
    `SeedSequence` whose spawn key is the address tuple.
    """
    seed: int
    level: int = 0
    replicate: int = 0
    step: int = 0
    slot: int = Slot.GAUSS
    stream: int = Stream.LEVEL_ZERO

    def __post_init__(self):
        for name in ("level", "replicate", "step", "slot", "stream"):
            if getattr(self, name) < 0:
                raise ParameterError(f"NoiseKey.{name} must be non-negative")

    @property
    def address(self) -> Tuple[int, ...]:
        return int(self.stream), int(self.level), int(self.replicate), int(self.step), int(self.slot)

    def with_(self, **changes) -> "NoiseKey":
        return replace(self, **changes)

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(int(self.seed) & MASK64, spawn_key=self.address)
        return np.random.Generator(np.random.Philox(sequence))


def draw_gaussians(key: NoiseKey, n: Union[int, Tuple[int, ...]]) -> np.ndarray:
    shape = (n,) if isinstance(n, (int, np.integer)) else tuple(n)
    if any(s < 1 for s in shape):
        raise ParameterError(f"Number of draws must be positive, got {n}")
    return key.generator().standard_normal(shape)


def draw_batch(key: NoiseKey, n_data: int, n_b: Union[int, Tuple[int, ...]]) -> np.ndarray:
    """`n_b` indices drawn uniformly with replacement from {1, ..., n_data}."""
    shape = (n_b,) if isinstance(n_b, (int, np.integer)) else tuple(n_b)
    if n_data < 1 or any(s < 1 for s in shape):
        raise ParameterError(f"Invalid batch request: n_data={n_data}, n_b={n_b}")
    return key.generator().integers(1, n_data + 1, size=shape)


def derive_seed(seed: int, *path: int) -> int:
    """Seed of an independent sub-experiment, e.g. run `r` of an ensemble."""
    sequence = np.random.SeedSequence(int(seed) & MASK64, spawn_key=tuple(int(p) for p in path))
    return int(sequence.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass
class WorkLedger:
    """Gradient work spent by one chain, coupling or estimator run."""
    n_data: int = 0
    full_gradients: int = 0
    component_gradients: int = 0
    hessian_products: int = 0
    anchor_refreshes: int = 0
    anchor_batch_components: int = 0

    @property
    def passes(self) -> float:
        """Full-data passes with the anchor refresh counted separately."""
        if self.n_data == 0:
            return float(self.full_gradients)
        return self.full_gradients + self.component_gradients / self.n_data

    @property
    def passes_folded(self) -> float:
        """Full-data passes with the anchor refresh standing in for that step's batch."""
        if self.n_data == 0:
            return float(self.full_gradients)
        return self.full_gradients + (self.component_gradients - self.anchor_batch_components) / self.n_data

    def __iadd__(self, other: "WorkLedger") -> "WorkLedger":
        for f in fields(self):
            if f.name != "n_data":
                setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        self.n_data = self.n_data or other.n_data
        return self

    def as_dict(self) -> dict:
        result = {f.name: getattr(self, f.name) for f in fields(self)}
        result["passes"] = self.passes
        result["passes_folded"] = self.passes_folded
        return result


@dataclass(frozen=True)
class RunConfig:
    """Inputs of one unbiased estimator run.

    Fields left as `None` are filled by `resolve` from the target's Hessian at
    the mode and the gradient mode's defaults.
    """
    h0: float
    K: int
    N: int
    gradient_mode: str = "exact"
    gamma: Optional[float] = None
    B0: Optional[int] = None
    B: Optional[int] = None
    c_N: Optional[float] = None
    phi_N: Optional[float] = None
    c_R: Optional[float] = None
    tau: Optional[int] = None
    N_b: Optional[int] = None
    seed: int = 0
    mu0: str = "map"

    def __post_init__(self):
        if self.gradient_mode not in GRADIENT_MODES:
            raise ConfigError(["gradient_mode"], f"It must be one of: {', '.join(GRADIENT_MODES)}")
        if self.mu0 not in INITIAL_LAWS:
            raise ConfigError(["mu0"], f"It must be one of: {', '.join(INITIAL_LAWS)}")
        if not self.h0 > 0:
            raise ConfigError(["h0"], "It must be strictly greater than 0")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError(["gamma"], "It must be strictly greater than 0")
        if self.K < 1:
            raise ConfigError(["K"], "It must be a positive integer")
        if self.N < 1:
            raise ConfigError(["N"], "It must be a positive integer")
        for name in ("B0", "B"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigError([name], "It must be a non-negative integer")
        if self.c_N is not None and not self.c_N > 0:
            raise ConfigError(["c_N"], "It must be strictly greater than 0")
        if self.phi_N is not None and not self.phi_N > 2:
            raise ConfigError(["phi_N"], "It must be strictly greater than 2")
        if self.c_R is not None:
            bound = self.effective("phi_N") ** -0.5
            if not 0 <= self.c_R < bound:
                raise ConfigError(["c_R"], f"It must lie in [0, {bound:.6g}) (phi_N^-1/2)")
        if self.gradient_mode != "exact" and self.tau is not None:
            if self.tau < 2 or self.tau % 2:
                raise ConfigError(["tau"], "It must be an even integer greater or equal to 2")
        if self.N_b is not None and self.N_b < 1:
            raise ConfigError(["N_b"], "It must be a positive integer")

    def effective(self, name: str):
        value = getattr(self, name)
        return MODE_DEFAULTS[self.gradient_mode][name] if value is None else value

    def burn_in(self, level: int) -> int:
        """B_l = B0 + l·B, in coarse-kernel steps of level l."""
        return self.B0 + level * self.B

    @property
    def is_resolved(self) -> bool:
        required = ["gamma", "B0", "B", "c_N", "phi_N", "c_R"]
        if self.gradient_mode != "exact":
            required.append("tau")
        if self.gradient_mode == "svrg":
            required.append("N_b")
        return all(getattr(self, name) is not None for name in required)

    def resolve(self, m: float, M: float, n_data: int = 0) -> "RunConfig":
        """Fill every unset field from the extreme eigenvalues of H* and the data size."""
        if self.gradient_mode == "svrg" and n_data < 1:
            raise ConfigError(["gradient_mode"], "Stochastic gradients need a target split into data components")
        gamma = self.gamma if self.gamma is not None else math.sqrt(m)
        changes = {
            "gamma": gamma,
            "c_N": self.effective("c_N"),
            "phi_N": self.effective("phi_N"),
            "c_R": self.effective("c_R"),
        }
        if self.B is None:
            phi_D = MODE_DEFAULTS[self.gradient_mode]["phi_D"]
            changes["B"] = math.ceil(16 * math.log(math.sqrt(phi_D)) * gamma / (m * self.h0))
        if self.B0 is None:
            log_term = max(1.0, math.log(2 / (math.sqrt(M) * gamma * self.h0 ** 2)))
            changes["B0"] = math.ceil(16 * gamma / (m * self.h0) * log_term)
        if self.gradient_mode == "svrg":
            n_b = self.N_b if self.N_b is not None else max(1, math.ceil(n_data / 10))
            changes["N_b"] = n_b
            if self.tau is None:
                tau = math.ceil(n_data / n_b)
                changes["tau"] = max(2, tau + tau % 2)
        elif self.gradient_mode == "approx" and self.tau is None:
            changes["tau"] = APPROX_TAU
        resolved = replace(self, **changes)
        logger.debug(f"Resolved run configuration: {resolved}")
        return resolved
