import itertools
import logging
from typing import Callable, Dict

import numpy as np
from scipy import linalg
from scipy.special import softmax

from ububu.core import NoiseKey, Stream
from ububu.errors import ModelError
from ububu.models.gaussian import GaussianTarget, QuarticToy
from ububu.models.multinomial import MultinomialRegression
from ububu.models.poisson import PoissonSoccer, softplus
from ububu.models.potential import Potential

logger = logging.getLogger(__name__)

GROUND_TRUTH, COVARIATES, RESPONSES = 0, 1, 2

# Desk-scale sizes used when a configuration leaves them out.
DEFAULT_SIZES = {
    "poisson": {"n_teams": 8, "n_weeks": 20},
    "multinomial": {"n_classes": 10, "n_features": 50, "n_data": 2000},
}


def _generator(seed: int, draw: int) -> np.random.Generator:
    return NoiseKey(seed, level=draw, stream=Stream.DATA).generator()


def _sizes(sizes: dict, *names: str) -> list:
    values = []
    for name in names:
        if name not in sizes:
            raise ModelError(f"Missing size '{name}'")
        if not sizes[name] > 0:
            raise ModelError(f"Size '{name}' must be positive")
        values.append(sizes[name])
    return values


def synthetic_gaussian(sizes: dict, seed: int) -> GaussianTarget:
    d, kappa = _sizes(sizes, "dim", "kappa")
    return GaussianTarget.conditioned(d, kappa, sizes.get("n_data", 0), seed)


def synthetic_quartic(sizes: dict, seed: int) -> QuarticToy:
    d, kappa = _sizes(sizes, "dim", "kappa")
    return QuarticToy.conditioned(d, kappa, sizes.get("n_data", 0), seed, sizes.get("beta", 1.0))


def synthetic_multinomial(sizes: dict, seed: int) -> MultinomialRegression:
    m, d0, n_data = _sizes(sizes, "n_classes", "n_features", "n_data")
    prior_variance = sizes.get("prior_variance", 0.1)
    truth = np.sqrt(prior_variance) * _generator(seed, GROUND_TRUTH).standard_normal((m, d0))
    pixels = _generator(seed, COVARIATES).random((n_data, d0 - 1))
    covariates = np.hstack([pixels, np.ones((n_data, 1))])
    probabilities = softmax(covariates @ truth.T, axis=1)
    uniforms = _generator(seed, RESPONSES).random(n_data)
    labels = 1 + np.minimum((probabilities.cumsum(axis=1) < uniforms[:, None]).sum(axis=1), m - 1)
    model = MultinomialRegression(covariates, labels, m, prior_variance)
    model.ground_truth = truth.ravel()
    return model


def synthetic_poisson(sizes: dict, seed: int) -> PoissonSoccer:
    """Full round robin every week; each pair meets once, home side alternating."""
    n_teams, n_weeks = _sizes(sizes, "n_teams", "n_weeks")
    rw_variance = sizes.get("rw_variance", 0.01)
    prior_variance = sizes.get("prior_variance", 10.0)
    week, home, away = [], [], []
    for w in range(n_weeks):
        for i, j in itertools.combinations(range(n_teams), 2):
            h, a = (i, j) if (w + i + j) % 2 == 0 else (j, i)
            week.append(w)
            home.append(h)
            away.append(a)
    empty = PoissonSoccer([], [], [], [], [], n_teams, n_weeks, rw_variance, prior_variance)
    precision = empty.hessian(np.zeros(empty.dim))
    chol = linalg.cholesky(precision, lower=True)
    truth = linalg.solve_triangular(chol.T, _generator(seed, GROUND_TRUTH).standard_normal(empty.dim))
    eta_home, eta_away = [], []
    offset = n_teams * n_weeks
    for w, h, a in zip(week, home, away):
        eta_home.append(truth[h * n_weeks + w] + truth[offset + a * n_weeks + w])
        eta_away.append(truth[a * n_weeks + w] + truth[offset + h * n_weeks + w])
    generator = _generator(seed, RESPONSES)
    home_goals = generator.poisson(softplus(np.array(eta_home)))
    away_goals = generator.poisson(softplus(np.array(eta_away)))
    model = PoissonSoccer(week, home, away, home_goals, away_goals, n_teams, n_weeks, rw_variance, prior_variance)
    model.ground_truth = truth
    return model


SYNTHETIC: Dict[str, Callable[[dict, int], Potential]] = {
    GaussianTarget.name: synthetic_gaussian,
    QuarticToy.name: synthetic_quartic,
    MultinomialRegression.name: synthetic_multinomial,
    PoissonSoccer.name: synthetic_poisson,
}


def ingest_synthetic(kind: str, sizes: dict, seed: int) -> Potential:
    """Simulate a desk-scale dataset with ground truth drawn from the prior."""
    try:
        factory = SYNTHETIC[kind]
    except KeyError:
        raise ModelError(f"Unknown model kind '{kind}'. Possible kinds: {', '.join(sorted(SYNTHETIC))}")
    model = factory({**DEFAULT_SIZES.get(kind, {}), **sizes}, seed)
    logger.info(f"Synthetic {kind} model: dim={model.dim}, n_data={model.n_data}")
    return model
