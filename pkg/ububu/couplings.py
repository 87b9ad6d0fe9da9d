"""Synchronous couplings between stepsize levels.

Level l runs with stepsize h_l = h0/2^l. All levels of one run are driven by
a single noise tree: quadruples are drawn at the finest level and coarsened
level by level with `m_transform`, so that U(z, 2s, M(ξ1..ξ4)) equals the
composition of two U flows of duration s with ξ1..ξ4 exactly. Time is
processed in blocks of diffusion time h0 (2^l steps at level l) and all
levels share the final block.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from ububu.core import NoiseKey, PhaseState, RunConfig, Slot, Stream, WorkLedger, derive_seed, draw_batch, \
    draw_gaussians
from ububu.errors import NumericalError, ParameterError
from ububu.inexact import AnchorState
from ububu.integrators import ou_coeffs
from ububu.kernels import KERNELS, MODE_KERNELS, ApproxKernel, ChainKernel, OhoKernel, SvrgKernel, UbuKernel
from ububu.models.potential import HessianInfo, Potential

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2)


def m_transform(xi1: np.ndarray, xi2: np.ndarray, xi3: np.ndarray, xi4: np.ndarray, s: float,
                gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    """Map the noise of two U flows of duration s onto one flow of duration 2s."""
    half, full = ou_coeffs(s, gamma), ou_coeffs(2 * s, gamma)
    if full.c2 == 0:
        raise NumericalError(f"m_transform: degenerate OU integral for duration {2 * s}")
    xi1_new = (xi1 + xi3) / SQRT2
    integral = half.eta * (half.c1 * xi1 + half.c2 * xi2) + half.c1 * xi3 + half.c2 * xi4
    return xi1_new, (integral - full.c1 * xi1_new) / full.c2


def coarsen_octets(octets: np.ndarray, h_fine: float, gamma: float) -> np.ndarray:
    """(..., 8, d) fine noise for two steps of h_fine → (..., 4, d) for one step of 2·h_fine."""
    s = h_fine / 2
    first = m_transform(octets[..., 0, :], octets[..., 1, :], octets[..., 2, :], octets[..., 3, :], s, gamma)
    second = m_transform(octets[..., 4, :], octets[..., 5, :], octets[..., 6, :], octets[..., 7, :], s, gamma)
    return np.stack(first + second, axis=-2)


def coarsen(quadruples: np.ndarray, h_fine: float, gamma: float) -> np.ndarray:
    """(2n, 4, d) quadruples at stepsize h_fine → (n, 4, d) at 2·h_fine."""
    n, _, d = quadruples.shape
    return coarsen_octets(quadruples.reshape(n // 2, 8, d), h_fine, gamma)


def tree_seed(seed: int, stream: int, lowest_level: int) -> int:
    return derive_seed(seed, int(stream), lowest_level)


class NoiseTree:
    """Noise quadruples of every level lo..hi, block by block."""

    def __init__(self, seed: int, finest: int, coarsest: int, h0: float, gamma: float, dim: int,
                 replicate: int = 0, stream: int = Stream.TAIL):
        if coarsest < 0 or finest < coarsest:
            raise ParameterError(f"Invalid level range {coarsest}..{finest}")
        self.seed = seed
        self.finest = finest
        self.coarsest = coarsest
        self.h0 = h0
        self.gamma = gamma
        self.dim = dim
        self.replicate = replicate
        self.stream = stream
        self._cache: Tuple[int, Dict[int, np.ndarray]] = (-1, {})

    def finest_quadruples(self, block: int) -> np.ndarray:
        key = NoiseKey(self.seed, self.finest, self.replicate, block, Slot.GAUSS, self.stream)
        return draw_gaussians(key, (2 ** self.finest, 4, self.dim))

    def block(self, block: int) -> Dict[int, np.ndarray]:
        if self._cache[0] != block:
            levels = {self.finest: self.finest_quadruples(block)}
            for level in range(self.finest - 1, self.coarsest - 1, -1):
                levels[level] = coarsen(levels[level + 1], self.h0 / 2 ** (level + 1), self.gamma)
            self._cache = (block, levels)
        return self._cache[1]

    def quadruples(self, level: int, block: int) -> np.ndarray:
        return self.block(block)[level]


class OmegaTree:
    """Batches of every level lo..hi: each coarse batch is one of its two fine batches."""

    def __init__(self, seed: int, finest: int, coarsest: int, n_data: int, n_b: int, replicate: int = 0,
                 stream: int = Stream.TAIL):
        self.seed = seed
        self.finest = finest
        self.coarsest = coarsest
        self.n_data = n_data
        self.n_b = n_b
        self.replicate = replicate
        self.stream = stream
        self._cache: Tuple[int, Dict[int, np.ndarray]] = (-1, {})

    def coins(self, level: int, block: int) -> np.ndarray:
        """1 selects the first of the two fine batches."""
        key = NoiseKey(self.seed, level, self.replicate, block, Slot.COIN, self.stream)
        return key.generator().integers(0, 2, size=2 ** level)

    def block(self, block: int) -> Dict[int, np.ndarray]:
        if self._cache[0] != block:
            key = NoiseKey(self.seed, self.finest, self.replicate, block, Slot.BATCH, self.stream)
            levels = {self.finest: draw_batch(key, self.n_data, (2 ** self.finest, self.n_b))}
            for level in range(self.finest - 1, self.coarsest - 1, -1):
                fine = levels[level + 1]
                choice = 2 * np.arange(2 ** level) + 1 - self.coins(level, block)
                levels[level] = fine[choice]
            self._cache = (block, levels)
        return self._cache[1]


@dataclass
class CoupledPair:
    coarse: PhaseState
    fine: PhaseState
    coarse_anchor: Optional[AnchorState] = None
    fine_anchor: Optional[AnchorState] = None

    def gap(self) -> float:
        return float(np.linalg.norm(self.fine.stacked() - self.coarse.stacked()))


def _coupled(coarse: ChainKernel, fine: ChainKernel, pair: CoupledPair, octet: np.ndarray,
             omega_half: np.ndarray = None, omega_full: np.ndarray = None, omega_coarse: np.ndarray = None
             ) -> CoupledPair:
    if not math.isclose(coarse.h, 2 * fine.h):
        raise ParameterError(f"Coupled stepsizes must be h and h/2, got {coarse.h} and {fine.h}")
    octet = np.asarray(octet, dtype=np.float64)
    coarse_state = coarse.step(pair.coarse, coarsen_octets(octet, fine.h, coarse.gamma), omega_coarse)
    fine_state = fine.step(pair.fine, octet[:4], omega_half)
    fine_state = fine.step(fine_state, octet[4:], omega_full)
    return CoupledPair(coarse_state, fine_state, coarse.anchor, fine.anchor)


def coupled_ubu_step(potential: Potential, pair: CoupledPair, h: float, octet: np.ndarray, gamma: float,
                     ledger: WorkLedger = None) -> CoupledPair:
    ledger = ledger if ledger is not None else WorkLedger(potential.n_data)
    coarse = UbuKernel(potential, None, h, gamma, ledger)
    fine = UbuKernel(potential, None, h / 2, gamma, ledger)
    return _coupled(coarse, fine, pair, octet)


def coupled_svrg_step(potential: Potential, pair: CoupledPair, h: float, octet: np.ndarray, omega_half: np.ndarray,
                      omega_full: np.ndarray, coin: int, gamma: float, tau: int = None,
                      ledger: WorkLedger = None) -> CoupledPair:
    """Coarse batch is the first fine batch when `coin` is 1, the second otherwise."""
    if tau is not None and tau % 2:
        raise ParameterError("Anchor period must be even for coupled chains")
    ledger = ledger if ledger is not None else WorkLedger(potential.n_data)
    coarse = SvrgKernel(potential, None, h, gamma, ledger, tau, pair.coarse_anchor)
    fine = SvrgKernel(potential, None, h / 2, gamma, ledger, tau, pair.fine_anchor)
    return _coupled(coarse, fine, pair, octet, omega_half, omega_full, omega_half if coin else omega_full)


def coupled_approx_step(potential: Potential, info: HessianInfo, pair: CoupledPair, h: float, octet: np.ndarray,
                        gamma: float, tau: int = None, ledger: WorkLedger = None) -> CoupledPair:
    if tau is not None and tau % 2:
        raise ParameterError("Anchor period must be even for coupled chains")
    ledger = ledger if ledger is not None else WorkLedger(potential.n_data)
    coarse = ApproxKernel(potential, info, h, gamma, ledger, tau, pair.coarse_anchor)
    fine = ApproxKernel(potential, info, h / 2, gamma, ledger, tau, pair.fine_anchor)
    return _coupled(coarse, fine, pair, octet)


def coupled_oho_fine_step(kind: str, potential: Potential, info: HessianInfo, pair: CoupledPair, h: float,
                          octet: np.ndarray, gamma: float, batches: Tuple[np.ndarray, np.ndarray] = (None, None),
                          tau: int = None, ledger: WorkLedger = None) -> CoupledPair:
    """Coarse chain: OHO(h) on the Gaussian approximation. Fine chain: two inexact UBU(h/2) steps."""
    if kind not in ("svrg", "approx"):
        raise ParameterError(f"Unknown inexact kernel '{kind}'")
    ledger = ledger if ledger is not None else WorkLedger(potential.n_data)
    coarse = OhoKernel(potential, info, h, gamma, ledger)
    fine = KERNELS[kind](potential, info, h / 2, gamma, ledger, tau, pair.fine_anchor)
    return _coupled(coarse, fine, pair, octet, batches[0], batches[1])


def initial_state(potential: Potential, info: HessianInfo, config: RunConfig, level: int, replicate: int,
                  seed: int, stream: int) -> PhaseState:
    """Draw from μ0: x* or N(x*, (H*)⁻¹) for the position, N(0, I) for the velocity."""
    xi = draw_gaussians(NoiseKey(seed, level, replicate, 0, Slot.START, stream), (2, potential.dim))
    if config.gradient_mode == "exact" and config.mu0 == "map":
        return PhaseState(info.center.copy(), xi[1])
    return PhaseState(info.sample_positions(xi[0]), xi[1])


class LevelChain:
    """Schedule of one level inside a multilevel run.

    Exact gradients: an independent μ0 start at block B_hi − B_l, one kernel
    throughout. Inexact gradients: the finest level starts from μ_G at block
    0; level l < hi starts from level l+1's state at block B_hi − B_{l+1},
    runs OHO until block B_hi − B_l and the inexact kernel afterwards.
    Level 0 runs OHO throughout.
    """

    def __init__(self, potential: Potential, info: HessianInfo, config: RunConfig, level: int, finest: int,
                 ledger: WorkLedger):
        self.potential = potential
        self.info = info
        self.config = config
        self.level = level
        self.h = config.h0 / 2 ** level
        self.ledger = ledger
        self.state: Optional[PhaseState] = None
        self.samples: List[np.ndarray] = []
        burn_hi = config.burn_in(finest)
        mode = config.gradient_mode
        if mode == "exact":
            self.start_block = burn_hi - config.burn_in(level)
            self.switch_block = self.start_block
        else:
            self.start_block = 0 if level == finest else burn_hi - config.burn_in(level + 1)
            self.switch_block = burn_hi - config.burn_in(level) if level > 0 else math.inf
        self.kernel: ChainKernel = OhoKernel(potential, info, self.h, config.gamma, ledger)
        self._second = MODE_KERNELS[mode]

    def step_block(self, block: int, quadruples: np.ndarray, batches: np.ndarray = None) -> None:
        if block == self.switch_block:
            self.kernel = self._second(self.potential, self.info, self.h, self.config.gamma, self.ledger,
                                       self.config.tau)
        for j in range(quadruples.shape[0]):
            self.state = self.kernel.step(self.state, quadruples[j], None if batches is None else batches[j])

    def record(self, context: str) -> None:
        self.state.check_finite(f"{context}, level {self.level}")
        self.samples.append(self.state.x.copy())


def run_levels(potential: Potential, config: RunConfig, levels: Iterable[int], replicate: int = 0,
               stream: int = Stream.TAIL, ledger: WorkLedger = None) -> Dict[int, np.ndarray]:
    """Run the coupled chains of the contiguous levels given; K positions per level."""
    levels = sorted(set(levels))
    lo, hi = levels[0], levels[-1]
    if levels != list(range(lo, hi + 1)):
        raise ParameterError(f"Levels must be contiguous, got {levels}")
    if not config.is_resolved:
        raise ParameterError("Run configuration must be resolved before running chains")
    info = potential.hessian_at_min()
    ledger = ledger if ledger is not None else WorkLedger(potential.n_data)
    seed = tree_seed(config.seed, stream, lo)
    tree = NoiseTree(seed, hi, lo, config.h0, config.gamma, potential.dim, replicate, stream)
    omegas = None
    if config.gradient_mode == "svrg":
        omegas = OmegaTree(seed, hi, lo, potential.n_data, config.N_b, replicate, stream)
    chains = [LevelChain(potential, info, config, level, hi, ledger) for level in reversed(levels)]
    burn_hi = config.burn_in(hi)
    context = f"stream {int(stream)} replicate {replicate}"
    logger.debug(f"Running levels {lo}..{hi} ({context}) for {burn_hi + config.K} blocks")

    for block in range(burn_hi + config.K):
        for i, chain in enumerate(chains):
            if chain.start_block == block:
                if config.gradient_mode == "exact" or i == 0:
                    chain.state = initial_state(potential, info, config, chain.level, replicate, seed, stream)
                else:
                    chain.state = chains[i - 1].state.copy()
        quadruples = tree.block(block)
        batches = omegas.block(block) if omegas is not None else {}
        for chain in chains:
            if chain.state is not None:
                chain.step_block(block, quadruples[chain.level], batches.get(chain.level))
                if block >= burn_hi:
                    chain.record(context)

    return {chain.level: np.array(chain.samples) for chain in chains}


@dataclass
class PairedSamples:
    coarse: np.ndarray
    fine: np.ndarray
    ledger: WorkLedger


def run_nu_llp1(potential: Potential, config: RunConfig, level: int, replicate: int = 0,
                stream: int = Stream.PAIRWISE, ledger: WorkLedger = None) -> PairedSamples:
    """K paired positions from the coupling of levels l and l+1."""
    ledger = ledger if ledger is not None else WorkLedger(potential.n_data)
    samples = run_levels(potential, config, (level, level + 1), replicate, stream, ledger)
    return PairedSamples(samples[level], samples[level + 1], ledger)


def run_nu_llp1_sg(potential: Potential, config: RunConfig, level: int, replicate: int = 0,
                   stream: int = Stream.PAIRWISE, ledger: WorkLedger = None) -> PairedSamples:
    if config.gradient_mode != "svrg":
        raise ParameterError("run_nu_llp1_sg needs gradient_mode 'svrg'")
    return run_nu_llp1(potential, config, level, replicate, stream, ledger)


def run_nu_llp1_approx(potential: Potential, config: RunConfig, level: int, replicate: int = 0,
                       stream: int = Stream.PAIRWISE, ledger: WorkLedger = None) -> PairedSamples:
    if config.gradient_mode != "approx":
        raise ParameterError("run_nu_llp1_approx needs gradient_mode 'approx'")
    return run_nu_llp1(potential, config, level, replicate, stream, ledger)


def joint_tail_coupling(potential: Potential, config: RunConfig, lowest: int, l_max: int, replicate: int = 0,
                        stream: int = Stream.TAIL, ledger: WorkLedger = None) -> Dict[int, np.ndarray]:
    """Levels lowest..l_max+1 driven by one noise tree (and one batch tree)."""
    if lowest > l_max:
        raise ParameterError(f"Tail needs lowest level ≤ l_max, got {lowest} > {l_max}")
    return run_levels(potential, config, range(lowest, l_max + 2), replicate, stream, ledger)


def coupled_gap_rms(potential: Potential, kind: str, stepsizes: Iterable[float], gamma: float, replicates: int,
                    duration: float, seed: int, tau: int = 2, n_b: int = 1) -> np.ndarray:
    """RMS phase-space gap between chains at h and h/2 after `duration`, per h.

    Both chains start from one draw of μ_G and share noise through the
    coarsening map; a non-finite gap is reported as NaN.
    """
    info = potential.hessian_at_min()
    result = []
    for index, h in enumerate(stepsizes):
        n_steps = max(1, int(round(duration / h)))
        squares = np.empty(replicates)
        with np.errstate(over="ignore", invalid="ignore"):
            for r in range(replicates):
                key = NoiseKey(seed, index, r, 0, Slot.START, Stream.DIAGNOSTICS)
                start = draw_gaussians(key, (2, potential.dim))
                state = PhaseState(info.sample_positions(start[0]), start[1])
                pair = CoupledPair(state, state.copy(), AnchorState(tau), AnchorState(tau))
                try:
                    for k in range(n_steps):
                        key = NoiseKey(seed, index, r, k, Slot.GAUSS, Stream.DIAGNOSTICS)
                        octet = draw_gaussians(key, (8, potential.dim))
                        pair = _coupled_kind(kind, potential, info, pair, h, octet, gamma, tau, n_b,
                                             key.with_(slot=Slot.BATCH))
                    squares[r] = pair.gap() ** 2
                except (NumericalError, FloatingPointError):
                    squares[r] = np.nan
        result.append(math.sqrt(np.mean(squares)) if np.all(np.isfinite(squares)) else math.nan)
    return np.array(result)


def _coupled_kind(kind: str, potential: Potential, info: HessianInfo, pair: CoupledPair, h: float,
                  octet: np.ndarray, gamma: float, tau: int, n_b: int, batch_key: NoiseKey) -> CoupledPair:
    if kind == "ubu":
        return coupled_ubu_step(potential, pair, h, octet, gamma)
    if kind == "svrg":
        generator = batch_key.generator()
        omega = generator.integers(1, potential.n_data + 1, size=(2, n_b))
        coin = int(generator.integers(0, 2))
        return coupled_svrg_step(potential, pair, h, octet, omega[0], omega[1], coin, gamma, tau)
    if kind == "approx":
        return coupled_approx_step(potential, info, pair, h, octet, gamma, tau)
    if kind == "em":
        ledger = WorkLedger(potential.n_data)
        return _coupled(KERNELS["em"](potential, info, h, gamma, ledger),
                        KERNELS["em"](potential, info, h / 2, gamma, ledger), pair, octet)
    raise ParameterError(f"Unknown kernel family '{kind}'. Possible families: em, ubu, svrg, approx")
