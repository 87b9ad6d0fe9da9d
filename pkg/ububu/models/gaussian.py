from typing import Tuple

import numpy as np

from ububu.core import NoiseKey, Stream
from ububu.errors import ModelError
from ububu.models.potential import HessianInfo, Potential


def condition_spectrum(d: int, kappa: float) -> np.ndarray:
    """Eigenvalues 1, 1+(κ−1)/(d−1), ..., κ."""
    if d < 1 or kappa < 1:
        raise ModelError(f"Invalid spectrum request: d={d}, kappa={kappa}")
    if d == 1:
        return np.ones(1)
    return 1 + np.arange(d) * (kappa - 1) / (d - 1)


class GaussianTarget(Potential):
    """U(x) = ½ Σ_k λ_k (x_k − c_k)² with a diagonal precision.

    With `component_weights` (N_D × d, positive, columns summing to one) the
    quadratic is split into data terms U_i = ½ Σ_k w_ik λ_k (x_k − c_k)² and a
    zero prior term, so that stochastic gradients apply.
    """
    name = "gaussian"

    def __init__(self, precision: np.ndarray, component_weights: np.ndarray = None, center: np.ndarray = None):
        precision = np.asarray(precision, dtype=np.float64)
        if precision.ndim != 1 or precision.min() <= 0:
            raise ModelError("Precision must be a vector of positive eigenvalues")
        n_data = 0
        if component_weights is not None:
            component_weights = np.asarray(component_weights, dtype=np.float64)
            if component_weights.ndim != 2 or component_weights.shape[1] != precision.size:
                raise ModelError(f"Component weights must have shape (n_data, {precision.size})")
            if component_weights.min() <= 0 or not np.allclose(component_weights.sum(axis=0), 1.0, atol=1e-12):
                raise ModelError("Component weights must be positive with columns summing to one")
            n_data = component_weights.shape[0]
        super().__init__(precision.size, n_data)
        self.precision = precision
        self.weights = component_weights
        self.center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=np.float64)

    @classmethod
    def conditioned(cls, d: int, kappa: float, n_data: int = 0, seed: int = 0) -> "GaussianTarget":
        weights = None
        if n_data:
            raw = NoiseKey(seed, stream=Stream.DATA).generator().exponential(size=(n_data, d))
            weights = raw / raw.sum(axis=0)
        return cls(condition_spectrum(d, kappa), weights)

    @property
    def kappa(self) -> float:
        return float(self.precision.max() / self.precision.min())

    def value(self, x: np.ndarray) -> float:
        y = x - self.center
        return 0.5 * float(self.precision @ (y * y))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.precision * (x - self.center)

    def prior_grad(self, x: np.ndarray) -> np.ndarray:
        if self.n_data == 0:
            return self.grad(x)
        return np.zeros(self.dim)

    def grad_components(self, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
        indices = self.check_indices(indices)
        return self.weights[indices - 1] * self.grad(x)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return np.diag(self.precision)

    def minimizer(self) -> np.ndarray:
        return self.center.copy()

    def hessian_at_min(self) -> HessianInfo:
        if self._hessian_info is None:
            self._hessian_info = HessianInfo.diagonal(self.precision, self.center)
        return self._hessian_info


class QuarticToy(GaussianTarget):
    """Gaussian plus β/4·Σ (x_k − c_k)⁴: smooth, strongly convex, not quadratic."""
    name = "quartic"

    def __init__(self, precision: np.ndarray, beta: float = 1.0, component_weights: np.ndarray = None,
                 center: np.ndarray = None):
        super().__init__(precision, component_weights, center)
        if beta < 0:
            raise ModelError("The quartic coefficient must be non-negative")
        self.beta = beta

    @classmethod
    def conditioned(cls, d: int, kappa: float, n_data: int = 0, seed: int = 0, beta: float = 1.0) -> "QuarticToy":
        base = GaussianTarget.conditioned(d, kappa, n_data, seed)
        return cls(base.precision, beta, base.weights)

    def value(self, x: np.ndarray) -> float:
        y = x - self.center
        return super().value(x) + 0.25 * self.beta * float(np.sum(y ** 4))

    def grad(self, x: np.ndarray) -> np.ndarray:
        y = x - self.center
        return self.precision * y + self.beta * y ** 3

    def hessian(self, x: np.ndarray) -> np.ndarray:
        y = x - self.center
        return np.diag(self.precision + 3 * self.beta * y ** 2)


def gaussian_value_grad(target: GaussianTarget, x: np.ndarray) -> Tuple[float, np.ndarray]:
    if np.shape(x) != (target.dim,):
        raise ModelError(f"Expected a vector of length {target.dim}")
    return target.value_grad(x)
