import numpy as np

from ububu.models.potential import HessianInfo, Potential


class PreconditionedPotential(Potential):
    """V(y) = U(x* + A·y) with A = (H*)^{-1/2}; the mode moves to the origin."""
    name = "preconditioned"

    def __init__(self, base: Potential):
        super().__init__(base.dim, base.n_data)
        self.base = base
        info = base.hessian_at_min()
        self.center = info.center
        self.transform = info.inv_sqrt()

    def to_original(self, y: np.ndarray) -> np.ndarray:
        return self.base.to_original(self.center + y @ self.transform)

    def _point(self, y: np.ndarray) -> np.ndarray:
        return self.center + self.transform @ y

    def value(self, y: np.ndarray) -> float:
        return self.base.value(self._point(y))

    def grad(self, y: np.ndarray) -> np.ndarray:
        return self.transform @ self.base.grad(self._point(y))

    def prior_grad(self, y: np.ndarray) -> np.ndarray:
        return self.transform @ self.base.prior_grad(self._point(y))

    def grad_components(self, indices: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.base.grad_components(indices, self._point(y)) @ self.transform

    def hessian(self, y: np.ndarray) -> np.ndarray:
        return self.transform @ self.base.hessian(self._point(y)) @ self.transform

    def minimizer(self) -> np.ndarray:
        return np.zeros(self.dim)

    def hessian_at_min(self) -> HessianInfo:
        if self._hessian_info is None:
            self._hessian_info = HessianInfo.from_matrix(self.hessian(np.zeros(self.dim)), np.zeros(self.dim))
        return self._hessian_info


def precondition(potential: Potential) -> PreconditionedPotential:
    return PreconditionedPotential(potential)
