import logging

import numpy as np
from scipy import linalg

from ububu.errors import ConvergenceError, NumericalError

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
MAX_HALVINGS = 60


def _newton_direction(hessian: np.ndarray, g: np.ndarray):
    try:
        factor = linalg.cho_factor(hessian)
    except (linalg.LinAlgError, ValueError):
        return None
    direction = -linalg.cho_solve(factor, g)
    if not np.all(np.isfinite(direction)) or direction @ g >= 0:
        return None
    return direction


def find_map(potential, x_init: np.ndarray = None, tol: float = None, max_iter: int = 500) -> np.ndarray:
    """Minimize U by Newton's method with Armijo backtracking.

    Steps fall back to steepest descent whenever the Cholesky solve fails or
    does not give a descent direction. Converged when ‖∇U(x)‖ ≤ tol, with
    tol = 1e-10·max(1, ‖∇U(x_init)‖) by default.
    """
    x = np.zeros(potential.dim) if x_init is None else np.array(x_init, dtype=np.float64)
    value, g = potential.value_grad(x)
    if not np.isfinite(value) or not np.all(np.isfinite(g)):
        raise NumericalError("find_map: non-finite potential at the initial point")
    if tol is None:
        tol = 1e-10 * max(1.0, float(np.linalg.norm(g)))

    for iteration in range(max_iter + 1):
        norm = float(np.linalg.norm(g))
        if norm <= tol:
            logger.debug(f"find_map: converged after {iteration} iterations, |grad|={norm:.3e}")
            return x
        if iteration == max_iter:
            break

        direction = _newton_direction(potential.hessian(x), g)
        if direction is None:
            logger.debug(f"find_map: Newton solve failed at iteration {iteration}, taking a gradient step")
            direction = -g
        slope = float(direction @ g)

        t = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = x + t * direction
            candidate_value, candidate_grad = potential.value_grad(candidate)
            if np.isfinite(candidate_value) and candidate_value <= value + ARMIJO * t * slope:
                break
            t /= 2
        else:
            # Rounding can hide the decrease near the optimum; accept a full
            # step that still reduces the gradient norm.
            candidate = x + direction
            candidate_value, candidate_grad = potential.value_grad(candidate)
            if not np.isfinite(candidate_value) or np.linalg.norm(candidate_grad) >= norm:
                raise ConvergenceError(f"find_map: line search failed at iteration {iteration}, |grad|={norm:.3e}")

        if not np.all(np.isfinite(candidate_grad)):
            raise NumericalError(f"find_map: non-finite gradient at iteration {iteration}")
        x, value, g = candidate, candidate_value, candidate_grad

    raise ConvergenceError(f"find_map: no convergence within {max_iter} iterations, |grad|={norm:.3e}")
