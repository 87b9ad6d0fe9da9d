from ububu.models.gaussian import GaussianTarget, QuarticToy, condition_spectrum, gaussian_value_grad
from ububu.models.multinomial import MultinomialRegression, multinomial_value_grad
from ububu.models.optimizer import find_map
from ububu.models.poisson import PoissonSoccer, poisson_value_grad, softplus
from ububu.models.potential import HessianInfo, Potential
from ububu.models.preconditioned import PreconditionedPotential, precondition
from ububu.models.synthetic import ingest_synthetic

__all__ = [
    "GaussianTarget",
    "HessianInfo",
    "MultinomialRegression",
    "PoissonSoccer",
    "Potential",
    "PreconditionedPotential",
    "QuarticToy",
    "condition_spectrum",
    "find_map",
    "gaussian_value_grad",
    "hessian_at_min",
    "ingest_synthetic",
    "multinomial_value_grad",
    "poisson_value_grad",
    "precondition",
    "softplus",
]


def hessian_at_min(potential: Potential) -> HessianInfo:
    return potential.hessian_at_min()
