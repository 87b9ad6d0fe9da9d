import math
from typing import Dict, Optional, Type

import numpy as np

from ububu.core import PhaseState, WorkLedger
from ububu.errors import ParameterError
from ububu.inexact import AnchorState, approx_ubu_step, svrg_ubu_step
from ububu.integrators import em_step, oho_step, ubu_step
from ububu.models.potential import HessianInfo, Potential


class ChainKernel:
    """One chain's transition at a fixed stepsize, fed a noise quadruple per step."""
    name: str = None
    uses_batches: bool = False

    def __init__(self, potential: Potential, info: HessianInfo, h: float, gamma: float, ledger: WorkLedger,
                 tau: Optional[int] = None, anchor: AnchorState = None):
        if not h > 0:
            raise ParameterError(f"Stepsize must be positive, got {h}")
        self.potential = potential
        self.info = info
        self.h = h
        self.gamma = gamma
        self.ledger = ledger
        self.anchor = anchor

    def step(self, z: PhaseState, xi: np.ndarray, omega: np.ndarray = None) -> PhaseState:
        raise NotImplementedError("Please implement this method")

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(h={self.h})"


class UbuKernel(ChainKernel):
    name = "ubu"

    def step(self, z: PhaseState, xi: np.ndarray, omega: np.ndarray = None) -> PhaseState:
        self.ledger.full_gradients += 1
        return ubu_step(self.potential, z, self.h, xi, self.gamma)[0]


class SvrgKernel(ChainKernel):
    name = "svrg"
    uses_batches = True

    def __init__(self, potential: Potential, info: HessianInfo, h: float, gamma: float, ledger: WorkLedger,
                 tau: Optional[int] = None, anchor: AnchorState = None):
        super().__init__(potential, info, h, gamma, ledger, tau, anchor if anchor is not None else AnchorState(tau))

    def step(self, z: PhaseState, xi: np.ndarray, omega: np.ndarray = None) -> PhaseState:
        if omega is None:
            raise ParameterError("Stochastic-gradient steps need a batch")
        return svrg_ubu_step(self.potential, z, self.anchor, self.h, omega, xi, self.gamma, self.ledger)[0]


class ApproxKernel(ChainKernel):
    name = "approx"

    def __init__(self, potential: Potential, info: HessianInfo, h: float, gamma: float, ledger: WorkLedger,
                 tau: Optional[int] = None, anchor: AnchorState = None):
        super().__init__(potential, info, h, gamma, ledger, tau, anchor if anchor is not None else AnchorState(tau))

    def step(self, z: PhaseState, xi: np.ndarray, omega: np.ndarray = None) -> PhaseState:
        return approx_ubu_step(self.potential, self.info, z, self.anchor, self.h, xi, self.gamma, self.ledger)[0]


class OhoKernel(ChainKernel):
    name = "oho"

    def step(self, z: PhaseState, xi: np.ndarray, omega: np.ndarray = None) -> PhaseState:
        self.ledger.hessian_products += 1
        return oho_step(self.info, z, self.h, xi, self.gamma)


class EmKernel(ChainKernel):
    """Euler–Maruyama driven by the Brownian increment carried by the quadruple."""
    name = "em"

    def step(self, z: PhaseState, xi: np.ndarray, omega: np.ndarray = None) -> PhaseState:
        self.ledger.full_gradients += 1
        return em_step(self.potential, z, self.h, (xi[0] + xi[2]) / math.sqrt(2), self.gamma)


KERNELS: Dict[str, Type[ChainKernel]] = {
    UbuKernel.name: UbuKernel,
    SvrgKernel.name: SvrgKernel,
    ApproxKernel.name: ApproxKernel,
    OhoKernel.name: OhoKernel,
    EmKernel.name: EmKernel,
}

# Kernel of a chain that runs with gradients of the given mode.
MODE_KERNELS: Dict[str, Type[ChainKernel]] = {
    "exact": UbuKernel,
    "svrg": SvrgKernel,
    "approx": ApproxKernel,
}
