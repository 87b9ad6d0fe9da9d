import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ububu.core import NoiseKey, PhaseState, WeightedNormParams, draw_gaussians, weighted_norm_sq
from ububu.couplings import m_transform
from ububu.errors import ParameterError
from ububu.integrators import b_step, em_step, hstar_step, o2_step, o_step, oho_step, ou_coeffs, u_step, ubu_step
from ububu.models.gaussian import GaussianTarget
from ububu.models.potential import HessianInfo

from tests.flat import Flat


def test_b_step_flat_is_identity():
    z = PhaseState([1.0, 2.0], [3.0, 4.0])
    out = b_step(z, 0.3, np.zeros(2))
    np.testing.assert_array_equal(out.x, z.x)
    np.testing.assert_array_equal(out.v, z.v)


def test_b_step_kick():
    assert b_step(PhaseState([0.0], [1.0]), 0.1, np.array([2.0])).v[0] == pytest.approx(0.8)


def test_u_step_deterministic_part():
    zero = np.zeros(1)
    out = u_step(PhaseState([0.0], [1.0]), 0.5, zero, zero, 2.0)
    assert out.x[0] == pytest.approx((1 - math.exp(-1)) / 2, abs=1e-12)
    assert out.v[0] == pytest.approx(math.exp(-1), abs=1e-12)


def test_u_step_short_duration_is_near_identity():
    xi = np.ones(3)
    z = PhaseState([1.0, -1.0, 0.5], [0.2, 0.0, -0.3])
    out = u_step(z, 1e-12, xi, xi, 1.0)
    assert np.max(np.abs(out.x - z.x)) < 1e-5
    assert np.max(np.abs(out.v - z.v)) < 1e-5


@given(st.floats(1e-4, 10.0), st.floats(1e-3, 10.0))
def test_ou_coefficients_are_consistent(s, gamma):
    c = ou_coeffs(s, gamma)
    assert 0 < c.eta < 1
    assert c.c1 ** 2 + c.c2 ** 2 == pytest.approx(c.var2, rel=1e-9)
    assert c.c1 * math.sqrt(s) == pytest.approx(c.F, rel=1e-9)


def test_ou_coefficients_reject_zero_duration():
    with pytest.raises(ParameterError):
        ou_coeffs(0.0, 1.0)


def test_ubu_flat_equals_single_u_flow():
    d, h, gamma = 3, 0.4, 1.5
    xi = draw_gaussians(NoiseKey(1), (4, d))
    z = PhaseState([0.3, -0.2, 1.0], [1.0, 0.5, -0.5])
    stepped, _ = ubu_step(Flat(d), z, h, xi, gamma)
    xi1, xi2 = m_transform(xi[0], xi[1], xi[2], xi[3], h / 2, gamma)
    direct = u_step(z, h, xi1, xi2, gamma)
    np.testing.assert_allclose(stepped.x, direct.x, atol=1e-12)
    np.testing.assert_allclose(stepped.v, direct.v, atol=1e-12)


def test_o2_equals_single_o_flow():
    d, s, gamma = 2, 0.6, 0.8
    xi = draw_gaussians(NoiseKey(4), (4, d))
    z = PhaseState([1.0, -1.0], [0.4, 2.0])
    halves = o2_step(z, s, xi, gamma)
    direct = o_step(z, s, *m_transform(xi[0], xi[1], xi[2], xi[3], s / 2, gamma), gamma)
    np.testing.assert_array_equal(halves.x, z.x)
    np.testing.assert_allclose(halves.v, direct.v, atol=1e-12)


def test_ubu_rejects_zero_stepsize():
    with pytest.raises(ParameterError):
        ubu_step(Flat(1), PhaseState([0.0], [0.0]), 0.0, np.zeros((4, 1)), 1.0)


def test_o_step_without_noise_shrinks_velocity():
    zero = np.zeros(2)
    z = PhaseState([1.0, 2.0], [1.0, -1.0])
    out = o_step(z, 0.5, zero, zero, 2.0)
    np.testing.assert_array_equal(out.x, z.x)
    np.testing.assert_allclose(out.v, math.exp(-1) * z.v)


def test_hstar_zero_time_is_identity():
    info = HessianInfo.diagonal(np.array([1.0, 4.0]), np.zeros(2))
    z = PhaseState([1.0, 2.0], [0.5, 0.0])
    out = hstar_step(info, z, 0.0)
    np.testing.assert_allclose(out.x, z.x)
    np.testing.assert_allclose(out.v, z.v)


def test_hstar_quarter_rotation():
    info = HessianInfo.diagonal(np.array([1.0]), np.zeros(1))
    out = hstar_step(info, PhaseState([1.0], [0.0]), math.pi / 2)
    assert out.x[0] == pytest.approx(0.0, abs=1e-12)
    assert out.v[0] == pytest.approx(-1.0, abs=1e-12)


def test_em_free_flight():
    z = PhaseState([1.0], [2.0])
    out = em_step(Flat(1), z, 0.1, np.zeros(1), 3.0)
    assert out.x[0] == pytest.approx(1.2)
    assert out.v[0] == pytest.approx(2.0 * (1 - 0.3))


@pytest.mark.slow
def test_oho_preserves_gaussian_approximation():
    target = GaussianTarget(np.array([1.0, 3.0]))
    info = target.hessian_at_min()
    n = 10 ** 6
    key = NoiseKey(2)
    start = draw_gaussians(key, (2, 2))
    z = PhaseState(info.sample_positions(start[0]), start[1])
    xs, vs = np.empty((n, 2)), np.empty((n, 2))
    for k in range(n):
        z = oho_step(info, z, 0.7, draw_gaussians(key.with_(step=k + 1), (4, 2)), 1.0)
        xs[k], vs[k] = z.x, z.v
    np.testing.assert_allclose(xs.var(axis=0), [1.0, 1 / 3], rtol=0.01)
    np.testing.assert_allclose(vs.var(axis=0), [1.0, 1.0], rtol=0.01)


def test_synchronous_ubu_contracts_in_weighted_norm():
    target = GaussianTarget(np.array([1.0, 1.5, 2.0, 3.0, 4.0]))
    info = target.hessian_at_min()
    gamma = math.sqrt(8 * info.M)
    h = 0.9 / (2 * gamma)
    p = WeightedNormParams.default(info.M, gamma)
    bound = 1 - info.m * h / (8 * gamma)
    key = NoiseKey(9)
    worst = 0.0
    for r in range(100):
        start = draw_gaussians(key.with_(replicate=r), (4, 5))
        z = PhaseState(start[0], start[1])
        other = PhaseState(z.x + start[2], z.v + start[3])
        xi = draw_gaussians(key.with_(replicate=r, step=1), (4, 5))
        z, _ = ubu_step(target, z, h, xi, gamma)
        other, _ = ubu_step(target, other, h, xi, gamma)
        after = weighted_norm_sq(PhaseState(other.x - z.x, other.v - z.v), p)
        before = weighted_norm_sq(PhaseState(start[2], start[3]), p)
        worst = max(worst, math.sqrt(after / before))
    assert worst <= bound
