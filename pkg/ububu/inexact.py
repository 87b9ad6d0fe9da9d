import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ububu.core import PhaseState, WorkLedger
from ububu.errors import ParameterError
from ububu.integrators import ubu_step_with
from ububu.models.potential import HessianInfo, Potential

logger = logging.getLogger(__name__)


@dataclass
class AnchorState:
    """Chain-local anchor x̂ with its cached gradients.

    The anchor is refreshed at the gradient point of step k whenever
    k mod τ = 0, counting in the owning chain's own steps. `tau=None` keeps
    the first anchor forever.
    """
    tau: Optional[int]
    step: int = 0
    x_hat: np.ndarray = None
    components: np.ndarray = None
    g_full: np.ndarray = None
    full_grad: np.ndarray = None
    refreshes: int = 0

    def __post_init__(self):
        if self.tau is not None and self.tau < 1:
            raise ParameterError(f"Anchor period must be positive, got {self.tau}")

    def due(self) -> bool:
        if self.x_hat is None:
            return True
        return self.tau is not None and self.step % self.tau == 0

    def refresh_components(self, potential: Potential, x: np.ndarray, ledger: WorkLedger) -> None:
        self.x_hat = np.array(x)
        self.components = potential.grad_components(np.arange(1, potential.n_data + 1), self.x_hat)
        self.g_full = self.components.sum(axis=0)
        self.refreshes += 1
        ledger.component_gradients += potential.n_data
        ledger.anchor_refreshes += 1

    def refresh_full(self, potential: Potential, x: np.ndarray, ledger: WorkLedger) -> None:
        self.x_hat = np.array(x)
        self.full_grad = potential.grad(self.x_hat)
        self.refreshes += 1
        ledger.full_gradients += 1
        ledger.anchor_refreshes += 1

    @classmethod
    def fixed(cls, potential: Potential, x_hat: np.ndarray, kind: str = "svrg",
              ledger: WorkLedger = None) -> "AnchorState":
        """Anchor pinned at x̂ forever; with x̂ = x* this is the control-variate gradient."""
        anchor = cls(tau=None)
        ledger = ledger if ledger is not None else WorkLedger(potential.n_data)
        if kind == "svrg":
            anchor.refresh_components(potential, x_hat, ledger)
        else:
            anchor.refresh_full(potential, x_hat, ledger)
        return anchor


def svrg_gradient(potential: Potential, x: np.ndarray, omega: np.ndarray, anchor: AnchorState,
                  ledger: WorkLedger = None) -> np.ndarray:
    """∇U_0(x) + Σ∇U_i(x̂) + (N_D/N_b)·Σ_{i∈ω}[∇U_i(x) − ∇U_i(x̂)]."""
    omega = potential.check_indices(omega)
    if omega.size == 0:
        raise ParameterError("Batch must not be empty")
    correction = potential.grad_components(omega, x) - anchor.components[omega - 1]
    if ledger is not None:
        ledger.component_gradients += omega.size
    return potential.prior_grad(x) + anchor.g_full + potential.n_data / omega.size * correction.sum(axis=0)


def quad_gradient(info: HessianInfo, potential: Potential, x: np.ndarray, anchor: AnchorState,
                  ledger: WorkLedger = None) -> np.ndarray:
    """∇U(x̂) + H*(x − x̂)."""
    if ledger is not None:
        ledger.hessian_products += 1
    return anchor.full_grad + info.matvec(x - anchor.x_hat)


def svrg_ubu_step(potential: Potential, z: PhaseState, anchor: AnchorState, h: float, omega: np.ndarray,
                  xi: np.ndarray, gamma: float, ledger: WorkLedger = None) -> Tuple[PhaseState, AnchorState]:
    ledger = ledger if ledger is not None else WorkLedger(potential.n_data)

    def gradient(x):
        if anchor.due():
            anchor.refresh_components(potential, x, ledger)
            ledger.anchor_batch_components += len(omega)
        return svrg_gradient(potential, x, omega, anchor, ledger)

    z, _ = ubu_step_with(gradient, z, h, xi, gamma)
    anchor.step += 1
    return z, anchor


def approx_ubu_step(potential: Potential, info: HessianInfo, z: PhaseState, anchor: AnchorState, h: float,
                    xi: np.ndarray, gamma: float, ledger: WorkLedger = None) -> Tuple[PhaseState, AnchorState]:
    ledger = ledger if ledger is not None else WorkLedger(potential.n_data)

    def gradient(x):
        if anchor.due():
            anchor.refresh_full(potential, x, ledger)
        return quad_gradient(info, potential, x, anchor, ledger)

    z, _ = ubu_step_with(gradient, z, h, xi, gamma)
    anchor.step += 1
    return z, anchor
