"""Randomized Hamiltonian Monte Carlo with partial velocity refreshment."""
import logging
import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from ububu.core import NoiseKey, PhaseState, Slot, Stream, WorkLedger, draw_gaussians
from ububu.errors import ConfigError, ConvergenceError, ParameterError
from ububu.estimator import DifferenceSample, EstimatorReport
from ububu.functions import FunctionSet
from ububu.models.potential import Potential

logger = logging.getLogger(__name__)

ACCEPTANCE_BAND = (0.60, 0.70)
PILOT_STEPS = 500
MAX_BISECTIONS = 20


@dataclass(frozen=True)
class RhmcConfig:
    h: float
    E_L: float
    alpha: float = 0.7
    K: int = 1000
    burn_in: int = 0
    seed: int = 0

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigError(["h"], "It must be strictly greater than 0")
        if not self.E_L >= 1:
            raise ConfigError(["E_L"], "It must be greater or equal to 1")
        if not 0 <= self.alpha < 1:
            raise ConfigError(["alpha"], "It must lie in [0, 1)")
        if self.K < 1:
            raise ConfigError(["K"], "It must be a positive integer")
        if self.burn_in < 0:
            raise ConfigError(["burn_in"], "It must be a non-negative integer")

    @classmethod
    def for_stepsize(cls, h: float, m: float, **kwargs) -> "RhmcConfig":
        """E_L = ⌈1/(h√m)⌉, so that E_L·h ≈ 1/√m."""
        return cls(h=h, E_L=max(1, math.ceil(1 / (h * math.sqrt(m)))), **kwargs)


@dataclass
class LeapfrogResult:
    state: PhaseState
    n_grads: int
    diverged: bool = False


def leapfrog(potential: Potential, z: PhaseState, h: float, L: int) -> LeapfrogResult:
    """L velocity-Verlet steps; the gradient at each step boundary is shared, L+1 evaluations."""
    if L < 1:
        raise ParameterError(f"Number of leapfrog steps must be positive, got {L}")
    if not h > 0:
        raise ParameterError(f"Stepsize must be positive, got {h}")
    x, v = z.x.copy(), z.v.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        g = potential.grad(x)
        for _ in range(L):
            v = v - h / 2 * g
            x = x + h * v
            g = potential.grad(x)
            v = v - h / 2 * g
    state = PhaseState(x, v)
    return LeapfrogResult(state, L + 1, diverged=not state.is_finite())


def hamiltonian(potential: Potential, z: PhaseState) -> float:
    return potential.value(z.x) + 0.5 * float(z.v @ z.v)


@dataclass
class RhmcStep:
    state: PhaseState
    accepted: bool
    L: int
    n_grads: int
    acceptance_probability: float


def rhmc_step(potential: Potential, z: PhaseState, config: RhmcConfig, key: NoiseKey) -> RhmcStep:
    """Geometric L, leapfrog proposal, Metropolis test with velocity flip on rejection, partial refreshment."""
    generator = key.generator()
    L = int(generator.geometric(1 / config.E_L))
    u = generator.random()
    refresh = generator.standard_normal(z.dim)

    proposal = leapfrog(potential, z, config.h, L)
    if proposal.diverged:
        probability = 0.0
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            delta = hamiltonian(potential, z) - hamiltonian(potential, proposal.state)
        probability = 0.0 if not math.isfinite(delta) else math.exp(min(0.0, delta))
    accepted = u < probability
    state = proposal.state if accepted else PhaseState(z.x, -z.v)
    v = config.alpha * state.v + math.sqrt(1 - config.alpha ** 2) * refresh
    return RhmcStep(PhaseState(state.x, v), accepted, L, proposal.n_grads, probability)


def _chain(potential: Potential, config: RhmcConfig, n_steps: int, replicate: int, slot: int,
           ledger: WorkLedger) -> Tuple[np.ndarray, float]:
    """Positions after each of `n_steps` steps from (x*, N(0, I)) and the acceptance rate."""
    start = draw_gaussians(NoiseKey(config.seed, 0, replicate, 0, Slot.START, Stream.RHMC), potential.dim)
    z = PhaseState(potential.minimizer(), start)
    positions = np.empty((n_steps, potential.dim))
    accepted = 0
    for k in range(n_steps):
        step = rhmc_step(potential, z, config, NoiseKey(config.seed, 0, replicate, k, slot, Stream.RHMC))
        ledger.full_gradients += step.n_grads
        accepted += step.accepted
        z = step.state
        positions[k] = z.x
    return positions, accepted / n_steps


def run_rhmc(potential: Potential, config: RhmcConfig, functions: FunctionSet, replicate: int = 0) -> EstimatorReport:
    """One chain of burn_in + K steps; the report's value is the average of f and f² over the last K."""
    ledger = WorkLedger(potential.n_data)
    positions, rate = _chain(potential, config, config.burn_in + config.K, replicate, Slot.PROPOSAL, ledger)
    functions = functions.with_squares()
    value = functions.evaluate(potential.to_original(positions[config.burn_in:])).mean(axis=0)
    sample = DifferenceSample("d0", 0, replicate, value, ledger.passes)
    logger.debug(f"RHMC chain {replicate}: acceptance {rate:.3f}, {ledger.full_gradients} gradients")
    return EstimatorReport("rhmc", functions.names[:len(functions) // 2], value, [sample], ledger, seed=config.seed,
                           metadata={"acceptance_rate": rate, "h": config.h, "E_L": config.E_L,
                                     "alpha": config.alpha, "ess_normalisation": "ensemble"})


def pilot_acceptance(potential: Potential, config: RhmcConfig, n_steps: int = PILOT_STEPS) -> float:
    _, rate = _chain(potential, config, n_steps, 0, Slot.TUNING, WorkLedger(potential.n_data))
    return rate


def autotune(potential: Potential, draft: RhmcConfig, n_steps: int = PILOT_STEPS,
             band: Tuple[float, float] = ACCEPTANCE_BAND) -> RhmcConfig:
    """Bisect h until the pilot acceptance rate lies in `band`, with E_L·h ≈ 1/√m."""
    low, high = band
    rate = pilot_acceptance(potential, draft, n_steps)
    if low <= rate <= high:
        return draft
    m = potential.hessian_at_min().m

    def trial(h: float) -> Tuple[RhmcConfig, float]:
        config = replace(draft, h=h, E_L=max(1, math.ceil(1 / (h * math.sqrt(m)))))
        result = pilot_acceptance(potential, config, n_steps)
        logger.info(f"RHMC tuning: h={h:.5g}, E_L={config.E_L}, acceptance={result:.3f}")
        return config, result

    config, rate = trial(draft.h)
    if low <= rate <= high:
        return config
    # Bracket: acceptance above the band at h_small, below it at h_large.
    if rate > high:
        h_small = draft.h
        for _ in range(MAX_BISECTIONS):
            h_large = 2 * h_small
            config, rate = trial(h_large)
            if low <= rate <= high:
                return config
            if rate < low:
                break
            h_small = h_large
        else:
            raise ConvergenceError(f"autotune: acceptance band {band} not bracketed after {MAX_BISECTIONS} steps")
    else:
        h_large = draft.h
        for _ in range(MAX_BISECTIONS):
            h_small = h_large / 2
            config, rate = trial(h_small)
            if low <= rate <= high:
                return config
            if rate > high:
                break
            h_large = h_small
        else:
            raise ConvergenceError(f"autotune: acceptance band {band} not bracketed after {MAX_BISECTIONS} steps")

    for _ in range(MAX_BISECTIONS):
        h = math.sqrt(h_small * h_large)
        config, rate = trial(h)
        if low <= rate <= high:
            return config
        if rate > high:
            h_small = h
        else:
            h_large = h
    raise ConvergenceError(f"autotune: no stepsize with acceptance in {band} after {MAX_BISECTIONS} bisections")
