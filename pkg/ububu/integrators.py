"""Splitting maps for kinetic Langevin dynamics.

    dX = V dt,  dV = −∇U(X) dt − γV dt + √(2γ) dW

Every map takes pre-drawn standard normals so that coupled chains can share
noise exactly. A noise quadruple is an array of shape (4, d): rows 0, 1 drive
the first U half-step and rows 2, 3 the second.
"""
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import mpmath
import numpy as np

from ububu.core import PhaseState
from ububu.errors import NumericalError, ParameterError
from ububu.models.potential import HessianInfo, Potential

WORKING_DIGITS = 50


@dataclass(frozen=True)
class OUStepCoeffs:
    """Coefficients of the exact Ornstein–Uhlenbeck flow over duration s.

    Z1 = √s·ξ1 is the Brownian increment and Z2 = c1·ξ1 + c2·ξ2 the OU
    integral ∫ e^{−γ(s−r)} dW_r, with Var Z2 = var2 and Cov(Z1, Z2) = F.
    """
    s: float
    gamma: float
    eta: float
    F: float
    var2: float
    c1: float
    c2: float


@lru_cache(maxsize=1024)
def ou_coeffs(s: float, gamma: float) -> OUStepCoeffs:
    if not s > 0:
        raise ParameterError(f"OU step duration must be positive, got {s}")
    if not gamma > 0:
        raise ParameterError(f"Friction must be positive, got {gamma}")
    with mpmath.workdps(WORKING_DIGITS):
        s_mp, gamma_mp = mpmath.mpf(s), mpmath.mpf(gamma)
        u = gamma_mp * s_mp
        eta = mpmath.exp(-u)
        F = -mpmath.expm1(-u) / gamma_mp
        var2 = -mpmath.expm1(-2 * u) / (2 * gamma_mp)
        c1 = F / mpmath.sqrt(s_mp)
        residual = var2 - c1 ** 2
        c2 = mpmath.sqrt(residual) if residual > 0 else mpmath.mpf(0)
        return OUStepCoeffs(float(s), float(gamma), float(eta), float(F), float(var2), float(c1), float(c2))


def b_step(z: PhaseState, h: float, g: np.ndarray) -> PhaseState:
    return PhaseState(z.x, z.v - h * g)


def u_step(z: PhaseState, s: float, xi1: np.ndarray, xi2: np.ndarray, gamma: float) -> PhaseState:
    c = ou_coeffs(s, gamma)
    z1 = math.sqrt(s) * xi1
    z2 = c.c1 * xi1 + c.c2 * xi2
    x = z.x + c.F * z.v + math.sqrt(2 / gamma) * (z1 - z2)
    v = c.eta * z.v + math.sqrt(2 * gamma) * z2
    return PhaseState(x, v)


def u2_step(z: PhaseState, duration: float, xi: np.ndarray, gamma: float) -> PhaseState:
    """Two U half-flows of duration/2 each."""
    z = u_step(z, duration / 2, xi[0], xi[1], gamma)
    return u_step(z, duration / 2, xi[2], xi[3], gamma)


def o_step(z: PhaseState, s: float, xi1: np.ndarray, xi2: np.ndarray, gamma: float) -> PhaseState:
    c = ou_coeffs(s, gamma)
    return PhaseState(z.x, c.eta * z.v + math.sqrt(2 * gamma) * (c.c1 * xi1 + c.c2 * xi2))


def o2_step(z: PhaseState, duration: float, xi: np.ndarray, gamma: float) -> PhaseState:
    z = o_step(z, duration / 2, xi[0], xi[1], gamma)
    return o_step(z, duration / 2, xi[2], xi[3], gamma)


def hstar_step(info: HessianInfo, z: PhaseState, h: float) -> PhaseState:
    """Exact Hamiltonian flow of ½(x−x*)ᵀH*(x−x*) + ½|v|² over time h."""
    if h < 0:
        raise ParameterError(f"Flow time must be non-negative, got {h}")
    x = info.to_eigenbasis(z.x - info.center)
    v = info.to_eigenbasis(z.v)
    cos, sin_over_omega, minus_omega_sin = info.rotation(h)
    x, v = cos * x + sin_over_omega * v, minus_omega_sin * x + cos * v
    return PhaseState(info.center + info.from_eigenbasis(x), info.from_eigenbasis(v))


def oho_step(info: HessianInfo, z: PhaseState, h: float, xi: np.ndarray, gamma: float) -> PhaseState:
    if not h > 0:
        raise ParameterError(f"Stepsize must be positive, got {h}")
    z = o_step(z, h / 2, xi[0], xi[1], gamma)
    z = hstar_step(info, z, h)
    return o_step(z, h / 2, xi[2], xi[3], gamma)


def ubu_step_with(gradient: Callable[[np.ndarray], np.ndarray], z: PhaseState, h: float, xi: np.ndarray,
                  gamma: float) -> Tuple[PhaseState, np.ndarray]:
    """UBU step with a caller-supplied gradient oracle, evaluated once at the midpoint."""
    if not h > 0:
        raise ParameterError(f"Stepsize must be positive, got {h}")
    z = u_step(z, h / 2, xi[0], xi[1], gamma)
    midpoint = z.x
    z = b_step(z, h, gradient(midpoint))
    return u_step(z, h / 2, xi[2], xi[3], gamma), midpoint


def ubu_step(potential: Potential, z: PhaseState, h: float, xi: np.ndarray,
             gamma: float) -> Tuple[PhaseState, np.ndarray]:
    """U(h/2), B(h), U(h/2); also returns the point where ∇U was evaluated."""
    return ubu_step_with(potential.grad, z, h, xi, gamma)


def em_step(potential: Potential, z: PhaseState, h: float, xi: np.ndarray, gamma: float) -> PhaseState:
    if not h > 0:
        raise ParameterError(f"Stepsize must be positive, got {h}")
    g = potential.grad(z.x)
    if not np.all(np.isfinite(g)):
        raise NumericalError("em_step: non-finite gradient")
    return PhaseState(z.x + h * z.v, z.v - h * g - h * gamma * z.v + math.sqrt(2 * gamma * h) * xi)
