import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ububu.core import NoiseKey, Stream
from ububu.errors import DataError, ModelError
from ububu.models import (
    GaussianTarget,
    HessianInfo,
    MultinomialRegression,
    PoissonSoccer,
    QuarticToy,
    condition_spectrum,
    find_map,
    gaussian_value_grad,
    hessian_at_min,
    ingest_synthetic,
    multinomial_value_grad,
    poisson_value_grad,
    precondition,
)


def _finite_difference(potential, x, eps=1e-6):
    grad = np.empty(x.size)
    for i in range(x.size):
        step = np.zeros(x.size)
        step[i] = eps
        grad[i] = (potential.value(x + step) - potential.value(x - step)) / (2 * eps)
    return grad


@pytest.fixture
def multinomial():
    covariates = np.array([[0.2, 0.9, 1.0], [0.7, 0.1, 1.0], [0.5, 0.5, 1.0], [0.0, 1.0, 1.0]])
    return MultinomialRegression(covariates, np.array([1, 2, 3, 2]), 3, prior_variance=1.0)


@pytest.fixture
def soccer():
    return PoissonSoccer([0, 0, 1, 1], [0, 1, 2, 0], [1, 2, 0, 2], [2, 0, 1, 3], [1, 1, 0, 0], 3, 2)


def test_spectrum():
    np.testing.assert_allclose(condition_spectrum(3, 4.0), [1.0, 2.5, 4.0])
    np.testing.assert_allclose(condition_spectrum(1, 7.0), [1.0])


def test_gaussian_value_and_gradient():
    target = GaussianTarget.conditioned(2, 2.0)
    x = np.array([1.0, 1.0])
    assert target.value(x) == pytest.approx(1.5)
    np.testing.assert_allclose(target.grad(x), [1.0, 2.0])
    assert target.value(np.zeros(2)) == 0.0


def test_gaussian_split_components_sum_to_gradient():
    target = GaussianTarget.conditioned(3, 5.0, n_data=6, seed=2)
    x = np.array([0.3, -1.0, 2.0])
    total = target.grad_components(np.arange(1, 7), x).sum(axis=0) + target.prior_grad(x)
    np.testing.assert_allclose(total, target.grad(x))


def test_gaussian_rejects_bad_weights():
    with pytest.raises(ModelError):
        GaussianTarget(np.array([1.0]), np.array([[0.5], [0.6]]))


def test_multinomial_uniform_likelihood():
    model = MultinomialRegression(np.array([[1.0]]), np.array([1]), 2, prior_variance=math.inf)
    assert model.value(np.zeros(2)) == pytest.approx(math.log(2))
    np.testing.assert_allclose(model.grad(np.zeros(2)), [-0.5, 0.5])


def test_multinomial_gradient(multinomial):
    q = np.linspace(-1, 1, multinomial.dim)
    np.testing.assert_allclose(multinomial.grad(q), _finite_difference(multinomial, q), rtol=1e-6, atol=1e-7)


def test_multinomial_components(multinomial):
    q = np.linspace(-0.5, 0.5, multinomial.dim)
    total = multinomial.grad_components(np.arange(1, 5), q).sum(axis=0) + multinomial.prior_grad(q)
    np.testing.assert_allclose(total, multinomial.grad(q))


def test_multinomial_hessian_is_positive_definite(multinomial):
    assert np.linalg.eigvalsh(multinomial.hessian(np.zeros(multinomial.dim))).min() > 0


def test_multinomial_rejects_unscaled_covariates():
    with pytest.raises(ModelError):
        MultinomialRegression(np.array([[2.0, 1.0]]), np.array([1]), 2)


def test_multinomial_map(multinomial):
    x_star = find_map(multinomial)
    assert np.linalg.norm(multinomial.grad(x_star)) <= 1e-8


def test_predictive_probability_vectorised(multinomial):
    q = np.zeros((5, multinomial.dim))
    np.testing.assert_allclose(multinomial.predictive_probability(q, multinomial.covariates[0], 2), 1 / 3)


def test_poisson_without_games_is_gaussian():
    model = PoissonSoccer([], [], [], [], [], 2, 3)
    theta = np.linspace(-1, 1, model.dim)
    precision = model.hessian(theta)
    assert model.value(theta) == pytest.approx(0.5 * theta @ precision @ theta)
    np.testing.assert_allclose(model.grad(theta), precision @ theta)


def test_poisson_dimension():
    assert PoissonSoccer([0], [0], [1], [1], [0], 2, 1).dim == 4


def test_poisson_gradient(soccer):
    theta = np.linspace(-0.3, 0.4, soccer.dim)
    np.testing.assert_allclose(soccer.grad(theta), _finite_difference(soccer, theta), rtol=1e-5, atol=1e-6)


def test_poisson_components(soccer):
    theta = np.linspace(-0.3, 0.4, soccer.dim)
    total = soccer.grad_components(np.arange(1, 5), theta).sum(axis=0) + soccer.prior_grad(theta)
    np.testing.assert_allclose(total, soccer.grad(theta))


@pytest.mark.parametrize("home, away, goals", [([0], [0], [1]), ([0], [5], [1]), ([0], [1], [-1])])
def test_poisson_rejects(home, away, goals):
    with pytest.raises(DataError):
        PoissonSoccer([0], home, away, goals, [0], 2, 1)


def test_quadratic_map_is_center():
    target = GaussianTarget(np.array([1.0, 3.0]), center=np.array([0.5, -2.0]))
    np.testing.assert_allclose(find_map(target, np.zeros(2)), [0.5, -2.0])


def test_quartic_map():
    toy = QuarticToy(np.array([1.0]), beta=1.0)
    np.testing.assert_allclose(find_map(toy, np.array([3.0])), [0.0], atol=1e-8)


@given(arrays(np.float64, 3, elements=st.floats(-2, 2)))
def test_quartic_is_strongly_convex(x):
    toy = QuarticToy(np.array([1.0, 2.0, 3.0]), beta=0.5)
    assert np.linalg.eigvalsh(toy.hessian(x)).min() >= 1.0


def test_hessian_at_min_spectrum():
    info = hessian_at_min(GaussianTarget.conditioned(3, 4.0))
    np.testing.assert_allclose(info.eigvals, [1.0, 2.5, 4.0])
    assert (info.m, info.M) == (1.0, 4.0)
    assert info.condition_number == 4.0


def test_hessian_info_rejects_indefinite():
    with pytest.raises(ModelError):
        HessianInfo.from_matrix(-np.eye(2), np.zeros(2))


def test_gaussian_approximation_draws():
    matrix = np.array([[2.0, 0.5], [0.5, 1.0]])
    info = HessianInfo.from_matrix(matrix, np.array([1.0, -1.0]))
    np.testing.assert_allclose(info.covariance(), np.linalg.inv(matrix), atol=1e-12)
    xi = NoiseKey(3, stream=Stream.DIAGNOSTICS).generator().standard_normal((100_000, 2))
    draws = info.sample_positions(xi)
    np.testing.assert_allclose(draws.mean(axis=0), [1.0, -1.0], atol=0.02)
    np.testing.assert_allclose(np.cov(draws.T), info.covariance(), atol=0.02 * info.covariance().max())


def test_grad_component_sum_includes_prior(soccer):
    theta = np.linspace(-0.5, 0.5, soccer.dim)
    total = sum(soccer.grad_component(i, theta) for i in range(soccer.n_data + 1))
    np.testing.assert_allclose(total, soccer.grad(theta), rtol=1e-10, atol=1e-12)


def test_preconditioned_gaussian_is_standard():
    target = GaussianTarget(np.array([1.0, 9.0]), center=np.array([1.0, 1.0]))
    whitened = precondition(target)
    y = np.array([0.3, -0.4])
    assert whitened.value(y) == pytest.approx(0.5 * y @ y)
    np.testing.assert_allclose(whitened.hessian_at_min().eigvals, [1.0, 1.0])
    np.testing.assert_allclose(whitened.to_original(np.zeros((2, 2))), np.ones((2, 2)))


@pytest.mark.parametrize("model", ["multinomial", "soccer"])
def test_preconditioned_hessian_is_identity_at_the_mode(model, request):
    whitened = precondition(request.getfixturevalue(model))
    y_star = np.zeros(whitened.dim)
    np.testing.assert_allclose(whitened.grad(y_star), 0.0, atol=1e-8)
    np.testing.assert_allclose(whitened.hessian(y_star), np.eye(whitened.dim), atol=1e-10)
    np.testing.assert_allclose(whitened.hessian_at_min().eigvals, 1.0, atol=1e-10)


def test_preconditioned_components(soccer):
    whitened = precondition(soccer)
    y = np.full(soccer.dim, 0.1)
    total = whitened.grad_components(np.arange(1, 5), y).sum(axis=0) + whitened.prior_grad(y)
    np.testing.assert_allclose(total, whitened.grad(y), atol=1e-10)


def test_synthetic_multinomial_is_reproducible():
    sizes = {"n_classes": 3, "n_features": 5, "n_data": 200}
    first, second = ingest_synthetic("multinomial", sizes, 4), ingest_synthetic("multinomial", sizes, 4)
    np.testing.assert_array_equal(first.covariates, second.covariates)
    np.testing.assert_array_equal(first.labels, second.labels)
    assert first.dim == 15


def test_synthetic_round_robin():
    model = ingest_synthetic("poisson", {"n_teams": 4, "n_weeks": 6}, 0)
    assert model.n_data == 36
    assert model.dim == 48


def test_synthetic_unknown_kind():
    with pytest.raises(ModelError):
        ingest_synthetic("ising", {}, 0)


def test_synthetic_missing_size():
    with pytest.raises(ModelError):
        ingest_synthetic("gaussian", {"dim": 3}, 0)


def test_value_grad_helpers(multinomial, soccer):
    target = GaussianTarget(np.array([1.0, 3.0]))
    cases = [(gaussian_value_grad, target), (multinomial_value_grad, multinomial), (poisson_value_grad, soccer)]
    for helper, model in cases:
        x = np.linspace(-0.3, 0.3, model.dim)
        value, grad = helper(model, x)
        assert value == pytest.approx(model.value(x))
        np.testing.assert_allclose(grad, model.grad(x))
        with pytest.raises(ModelError):
            helper(model, np.zeros(model.dim + 1))


def test_synthetic_poisson_desk_defaults():
    model = ingest_synthetic("poisson", {}, 0)
    assert (model.n_teams, model.n_weeks, model.dim) == (8, 20, 320)
