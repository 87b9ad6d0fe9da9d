import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
from scipy import linalg

from ububu.errors import ModelError

logger = logging.getLogger(__name__)


@dataclass
class HessianInfo:
    """H* = ∇²U(x*) with its symmetric eigendecomposition H* = QΛQᵀ."""
    matrix: np.ndarray
    center: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    _rotations: Dict[float, Tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, center: np.ndarray) -> "HessianInfo":
        matrix = np.asarray(matrix, dtype=np.float64)
        matrix = (matrix + matrix.T) / 2
        eigvals, eigvecs = linalg.eigh(matrix)
        if not np.all(np.isfinite(eigvals)) or eigvals[0] <= 0:
            raise ModelError(f"Hessian at the mode is not positive-definite (smallest eigenvalue {eigvals[0]:.3e})")
        return cls(matrix, np.asarray(center, dtype=np.float64), eigvals, eigvecs)

    @classmethod
    def diagonal(cls, eigvals: np.ndarray, center: np.ndarray) -> "HessianInfo":
        eigvals = np.asarray(eigvals, dtype=np.float64)
        if eigvals.min() <= 0:
            raise ModelError("Hessian at the mode is not positive-definite")
        return cls(np.diag(eigvals), np.asarray(center, dtype=np.float64), eigvals, np.eye(eigvals.size))

    @property
    def dim(self) -> int:
        return self.eigvals.size

    @property
    def m(self) -> float:
        return float(self.eigvals[0])

    @property
    def M(self) -> float:
        return float(self.eigvals[-1])

    @property
    def condition_number(self) -> float:
        return self.M / self.m

    def matvec(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    def inv_sqrt(self) -> np.ndarray:
        return (self.eigvecs / np.sqrt(self.eigvals)) @ self.eigvecs.T

    def covariance(self) -> np.ndarray:
        return (self.eigvecs / self.eigvals) @ self.eigvecs.T

    def to_eigenbasis(self, u: np.ndarray) -> np.ndarray:
        return u @ self.eigvecs

    def from_eigenbasis(self, u: np.ndarray) -> np.ndarray:
        return u @ self.eigvecs.T

    def sample_positions(self, xi: np.ndarray) -> np.ndarray:
        """Map standard normals (..., d) to draws of N(x*, (H*)⁻¹)."""
        return self.center + self.from_eigenbasis(xi / np.sqrt(self.eigvals))

    def rotation(self, h: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """cos(ωh), sin(ωh)/ω and −ω·sin(ωh) per eigenmode, ω = √λ."""
        if h not in self._rotations:
            omega = np.sqrt(self.eigvals)
            self._rotations[h] = (np.cos(omega * h), np.sin(omega * h) / omega, -omega * np.sin(omega * h))
        return self._rotations[h]


class Potential:
    """U(x) = U_0(x) + Σ_{i=1..N_D} U_i(x).

    Monolithic targets keep `n_data = 0`; their only component is the prior
    term, which is then the whole potential.
    """
    name: str = None

    def __init__(self, dim: int, n_data: int = 0):
        if dim < 1:
            raise ModelError(f"Dimension must be positive, got {dim}")
        self.dim = dim
        self.n_data = n_data
        self._minimizer = None
        self._hessian_info = None

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError("Please implement this method")

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Please implement this method")

    def value_grad(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        return self.value(x), self.grad(x)

    def prior_grad(self, x: np.ndarray) -> np.ndarray:
        if self.n_data == 0:
            return self.grad(x)
        raise NotImplementedError("Please implement this method")

    def grad_components(self, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Rows ∇U_i(x) for the 1-based data indices given."""
        raise NotImplementedError("Please implement this method")

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Please implement this method")

    def grad_component(self, i: int, x: np.ndarray) -> np.ndarray:
        if i == 0:
            return self.prior_grad(x)
        return self.grad_components(np.array([i]), x)[0]

    def check_indices(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 1 or indices.max() > self.n_data):
            raise ModelError(f"Data index out of range 1..{self.n_data}")
        return indices

    def minimizer(self) -> np.ndarray:
        if self._minimizer is None:
            from ububu.models.optimizer import find_map
            self._minimizer = find_map(self, np.zeros(self.dim))
        return self._minimizer

    def hessian_at_min(self) -> HessianInfo:
        if self._hessian_info is None:
            x_star = self.minimizer()
            self._hessian_info = HessianInfo.from_matrix(self.hessian(x_star), x_star)
            logger.debug(f"{self.name}: H* spectrum in [{self._hessian_info.m:.4g}, {self._hessian_info.M:.4g}]")
        return self._hessian_info

    def to_original(self, x: np.ndarray) -> np.ndarray:
        """Positions in the coordinates test functions are defined on."""
        return x

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(dim={self.dim}, n_data={self.n_data})"
