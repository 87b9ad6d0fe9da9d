"""Unbiased multilevel estimators built on the coupled chains.

A run realises a random level schedule, then evaluates

    S(c_R) = S0 + Σ_{l<L} S_{l,l+1} + D_L/(1 − c_R)
             + Σ_{l>L} 1[N_{l,l+1} = 1]/E[N_{l,l+1}] · (D_l − D_L·c_R^{l−L})

where S0 averages the level-0 chains, S_{l,l+1} averages the N_{l,l+1}
independent pairwise couplings and the D_l with l ≥ L come from one joint tail
coupling. c_R = 0 gives the plain telescoping estimator.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ububu.core import NoiseKey, RunConfig, Slot, Stream, WorkLedger, draw_gaussians
from ububu.couplings import joint_tail_coupling, run_levels, run_nu_llp1
from ububu.errors import NumericalError, ParameterError
from ububu.functions import FunctionSet
from ububu.models.potential import Potential
from ububu.utils import JSON

logger = logging.getLogger(__name__)

# Enumeration of Bernoulli levels stops once the expected number of further
# realised levels falls below this.
TAIL_MASS = 1e-12

SAMPLE_KINDS = ("d0", "pair", "tail")


@dataclass
class LevelSchedule:
    """Realised level counts N_{l,l+1}, l = 0..len(counts)−1.

    `probabilities[l]` is E[N_{l,l+1}] = c_N·φ_N^{−l}·N for l > L and the
    deterministic count for l ≤ L.
    """
    N: int
    c_N: float
    phi_N: float
    L: int
    counts: List[int]
    probabilities: List[float]

    @property
    def l_max(self) -> int:
        return max(level for level, count in enumerate(self.counts) if count > 0)

    def expected(self, level: int) -> float:
        return self.probabilities[level] if level < len(self.probabilities) else 0.0

    def as_dict(self) -> dict:
        return {
            "N": self.N, "c_N": self.c_N, "phi_N": self.phi_N, "L": self.L,
            "counts": list(self.counts), "probabilities": list(self.probabilities),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LevelSchedule":
        return cls(data["N"], data["c_N"], data["phi_N"], data["L"], list(data["counts"]),
                   list(data["probabilities"]))


def make_schedule(N: int, c_N: float, phi_N: float, key: NoiseKey) -> LevelSchedule:
    if N < 1:
        raise ParameterError(f"N must be positive, got {N}")
    if not c_N > 0:
        raise ParameterError(f"c_N must be positive, got {c_N}")
    if not phi_N > 2:
        raise ParameterError(f"phi_N must be greater than 2, got {phi_N}")
    counts, probabilities = [], []
    level = 0
    while True:
        expected = c_N * phi_N ** -level * N
        counts.append(math.ceil(expected - 1e-9))
        probabilities.append(float(counts[-1]))
        if expected <= 1 + 1e-12:
            break
        level += 1
    L = level
    counts[L] = 1
    probabilities[L] = 1.0
    while True:
        level += 1
        p = c_N * phi_N ** -level * N
        if p * phi_N / (phi_N - 1) < TAIL_MASS:
            break
        coin = key.with_(level=level, slot=Slot.COIN, stream=Stream.SCHEDULE).generator().random()
        counts.append(int(coin < p))
        probabilities.append(p)
    while len(counts) > L + 1 and counts[-1] == 0:
        counts.pop()
        probabilities.pop()
    schedule = LevelSchedule(N, c_N, phi_N, L, counts, probabilities)
    logger.info(f"Level schedule: L={L}, l_max={schedule.l_max}, counts={counts}")
    return schedule


def _values(samples: np.ndarray, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    samples = np.atleast_2d(samples)
    if samples.shape[0] < 1:
        raise ParameterError("At least one sample is required")
    values = np.asarray(f(samples), dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NumericalError("Non-finite test function value")
    return values


def d0(samples: np.ndarray, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """(1/K)·Σ f(z_i) over the K recorded positions."""
    return _values(samples, f).mean(axis=0)


def d_llp1(coarse: np.ndarray, fine: np.ndarray, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """(1/K)·Σ [f(z′_i) − f(z_i)] over K paired positions."""
    if np.shape(coarse) != np.shape(fine):
        raise ParameterError(f"Paired samples differ in shape: {np.shape(coarse)} and {np.shape(fine)}")
    return (_values(fine, f) - _values(coarse, f)).mean(axis=0)


def assemble_s(schedule: LevelSchedule, s0, pair_means: Dict[int, np.ndarray], tail: Dict[int, np.ndarray],
               c_R: float):
    """S(c_R) from S0, the averaged pairwise differences (l < L) and the tail differences (l ≥ L)."""
    bound = schedule.phi_N ** -0.5
    if not 0 <= c_R < bound:
        raise ParameterError(f"c_R must lie in [0, {bound:.6g}), got {c_R}")
    L = schedule.L
    if L not in tail:
        raise ParameterError(f"Tail difference at level L={L} is missing")
    result = np.asarray(s0, dtype=np.float64) + sum(np.asarray(pair_means[level]) for level in range(L))
    result = result + np.asarray(tail[L]) / (1 - c_R)
    for level in range(L + 1, len(schedule.counts)):
        if schedule.counts[level] == 1:
            result = result + (np.asarray(tail[level]) - np.asarray(tail[L]) * c_R ** (level - L)) \
                / schedule.probabilities[level]
    return result


@dataclass
class DifferenceSample:
    """One D₀ (kind "d0"), pairwise D_{l,l+1} ("pair") or tail D_{l,l+1} ("tail") value.

    `work` is in full-data passes. The tail coupling is one run, its whole
    cost is carried by the level-L sample.
    """
    kind: str
    level: int
    replicate: int
    value: np.ndarray
    work: float = 0.0

    def __post_init__(self):
        if self.kind not in SAMPLE_KINDS:
            raise ParameterError(f"Unknown difference kind '{self.kind}'")
        self.value = np.asarray(self.value, dtype=np.float64)
        if not np.all(np.isfinite(self.value)):
            raise NumericalError(f"Non-finite {self.kind} difference at level {self.level}")
        if self.work < 0:
            raise ParameterError("Work must be non-negative")

    def as_dict(self) -> dict:
        return {"kind": self.kind, "level": self.level, "replicate": self.replicate,
                "value": self.value.tolist(), "work": self.work}

    @classmethod
    def from_dict(cls, data: dict) -> "DifferenceSample":
        return cls(data["kind"], data["level"], data["replicate"], data["value"], data["work"])


@dataclass
class EstimatorReport:
    """Result of one estimator run for the functions f and their squares f².

    `value[:n]` estimates π(f) and `value[n:]` estimates π(f²).
    """
    mode: str
    functions: List[str]
    value: np.ndarray
    samples: List[DifferenceSample]
    work: WorkLedger
    c_R: float = 0.0
    schedule: Optional[LevelSchedule] = None
    seed: int = 0
    metadata: Dict[str, JSON] = field(default_factory=dict)

    @property
    def n_functions(self) -> int:
        return len(self.functions)

    @property
    def estimate(self) -> np.ndarray:
        return self.value[:self.n_functions]

    @property
    def second_moment(self) -> np.ndarray:
        return self.value[self.n_functions:]

    def by_kind(self, kind: str) -> List[DifferenceSample]:
        return [s for s in self.samples if s.kind == kind]

    def level_samples(self) -> Dict[int, np.ndarray]:
        """Pairwise D values per level, each an (N_{l,l+1}, 2n) array."""
        levels: Dict[int, list] = {}
        for sample in self.by_kind("pair"):
            levels.setdefault(sample.level, []).append(sample.value)
        return {level: np.array(values) for level, values in sorted(levels.items())}

    def tail_sum(self) -> np.ndarray:
        """Contribution of the tail coupling to `value`."""
        if self.schedule is None:
            return np.zeros_like(self.value)
        return self.value - self.components_sum()

    def components_sum(self) -> np.ndarray:
        """S0 + Σ_{l<L} S_{l,l+1}."""
        s0 = np.mean([s.value for s in self.by_kind("d0")], axis=0)
        pairs = self.level_samples()
        return s0 + sum(values.mean(axis=0) for values in pairs.values())

    def recompute(self) -> np.ndarray:
        s0 = np.mean([s.value for s in self.by_kind("d0")], axis=0)
        if self.schedule is None:
            return s0
        pair_means = {level: values.mean(axis=0) for level, values in self.level_samples().items()}
        tail = {s.level: s.value for s in self.by_kind("tail")}
        return assemble_s(self.schedule, s0, pair_means, tail, self.c_R)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "functions": list(self.functions),
            "value": self.value.tolist(),
            "c_R": self.c_R,
            "seed": self.seed,
            "schedule": self.schedule.as_dict() if self.schedule is not None else None,
            "work": self.work.as_dict(),
            "samples": [s.as_dict() for s in self.samples],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EstimatorReport":
        work = data["work"]
        ledger = WorkLedger(**{k: v for k, v in work.items() if k not in ("passes", "passes_folded")})
        schedule = LevelSchedule.from_dict(data["schedule"]) if data.get("schedule") else None
        return cls(data["mode"], list(data["functions"]), np.asarray(data["value"], dtype=np.float64),
                   [DifferenceSample.from_dict(s) for s in data["samples"]], ledger, data["c_R"], schedule,
                   data.get("seed", 0), data.get("metadata", {}))


@dataclass(frozen=True)
class _Task:
    kind: str
    level: int
    replicate: int = 0
    l_max: int = 0


class _Runner:
    def __init__(self, operation: str, potential: Potential, config: RunConfig, functions: FunctionSet):
        self.operation = operation
        self.potential = potential
        self.config = config
        self.functions = functions
        self.info = potential.hessian_at_min()

    def evaluate(self, positions: np.ndarray) -> np.ndarray:
        return self.functions.evaluate(self.potential.to_original(positions))

    def level_zero(self, replicate: int, ledger: WorkLedger) -> np.ndarray:
        if self.config.gradient_mode == "exact":
            return run_levels(self.potential, self.config, [0], replicate, Stream.LEVEL_ZERO, ledger)[0]
        key = NoiseKey(self.config.seed, 0, replicate, 0, Slot.START, Stream.LEVEL_ZERO)
        return self.info.sample_positions(draw_gaussians(key, (self.config.K, self.potential.dim)))

    def run(self, task: _Task, ledger: WorkLedger) -> List[DifferenceSample]:
        if task.kind == "d0":
            value = d0(self.level_zero(task.replicate, ledger), self.evaluate)
            return [DifferenceSample("d0", 0, task.replicate, value, ledger.passes)]
        if task.kind == "pair":
            pair = run_nu_llp1(self.potential, self.config, task.level, task.replicate, Stream.PAIRWISE, ledger)
            value = d_llp1(pair.coarse, pair.fine, self.evaluate)
            return [DifferenceSample("pair", task.level, task.replicate, value, ledger.passes)]
        levels = joint_tail_coupling(self.potential, self.config, task.level, task.l_max, task.replicate,
                                     Stream.TAIL, ledger)
        return [
            DifferenceSample("tail", level, task.replicate, d_llp1(levels[level], levels[level + 1], self.evaluate),
                             ledger.passes if level == task.level else 0.0)
            for level in range(task.level, task.l_max + 1)
        ]

    def __call__(self, task: _Task) -> Tuple[List[DifferenceSample], WorkLedger]:
        ledger = WorkLedger(self.potential.n_data)
        try:
            return self.run(task, ledger), ledger
        except NumericalError as e:
            raise NumericalError(f"{self.operation}: level {task.level} replicate {task.replicate}: {e}") from e


def _run(operation: str, mode: str, potential: Potential, config: RunConfig, functions: FunctionSet,
         threads: int = 1) -> EstimatorReport:
    if config.gradient_mode != mode:
        raise ParameterError(f"{operation} needs gradient_mode '{mode}', got '{config.gradient_mode}'")
    if threads < 1:
        raise ParameterError(f"Number of threads must be positive, got {threads}")
    info = potential.hessian_at_min()
    if not config.is_resolved:
        config = config.resolve(info.m, info.M, potential.n_data)
    functions = functions.with_squares()
    schedule = make_schedule(config.N, config.c_N, config.phi_N, NoiseKey(config.seed, stream=Stream.SCHEDULE))

    tasks = [_Task("d0", 0, r) for r in range(config.N)]
    tasks += [_Task("pair", level, r) for level in range(schedule.L) for r in range(schedule.counts[level])]
    tasks.append(_Task("tail", schedule.L, l_max=schedule.l_max))

    runner = _Runner(operation, potential, config, functions)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        results = list(executor.map(runner, tasks))

    samples, work = [], WorkLedger(potential.n_data)
    for result, ledger in results:
        samples.extend(result)
        work += ledger
    report = EstimatorReport(config.gradient_mode, functions.names[:len(functions) // 2], np.zeros(0), samples,
                             work, config.c_R, schedule, config.seed,
                             {"config": _config_dict(config), "ess_normalisation": "ensemble"})
    report.value = report.recompute()
    logger.debug(f"{operation}: {len(tasks)} runs, {work.passes:.1f} data passes")
    return report


def _config_dict(config: RunConfig) -> dict:
    return {name: getattr(config, name) for name in config.__dataclass_fields__}


def run_ububu(potential: Potential, config: RunConfig, functions: FunctionSet, threads: int = 1) -> EstimatorReport:
    """Exact-gradient estimator: level-0 UBU chains from μ0, UBU couplings on every level."""
    return _run("run_ububu", "exact", potential, config, functions, threads)


def run_ububu_sg(potential: Potential, config: RunConfig, functions: FunctionSet,
                 threads: int = 1) -> EstimatorReport:
    """SVRG estimator: S0 over N·K draws of μ_G, OHO/SVRG and SVRG/SVRG couplings above."""
    return _run("run_ububu_sg", "svrg", potential, config, functions, threads)


def run_ububu_approx(potential: Potential, config: RunConfig, functions: FunctionSet,
                     threads: int = 1) -> EstimatorReport:
    return _run("run_ububu_approx", "approx", potential, config, functions, threads)


ESTIMATORS = {
    "exact": run_ububu,
    "svrg": run_ububu_sg,
    "approx": run_ububu_approx,
}


def run_estimator(potential: Potential, config: RunConfig, functions: FunctionSet,
                  threads: int = 1) -> EstimatorReport:
    return ESTIMATORS[config.gradient_mode](potential, config, functions, threads)


def run_ensemble(potential: Potential, config: RunConfig, functions: FunctionSet, seeds: Sequence[int],
                 threads: int = 1) -> List[EstimatorReport]:
    """Independent estimator runs, one per seed, in seed order."""
    return [run_estimator(potential, replace(config, seed=seed), functions, threads) for seed in seeds]
