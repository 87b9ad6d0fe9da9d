from typing import Sequence, Tuple

import numpy as np
from scipy.special import expit

from ububu.errors import DataError, ModelError
from ububu.models.potential import Potential


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0, x)


class PoissonSoccer(Potential):
    """Match-score regression with time-varying attack and defence strengths.

    Goals of the home side in game g are Poisson with rate
    softplus(a[home, w] + d[away, w]) and symmetrically for the away side.
    Parameters are θ = (a, d), each a (teams × weeks) matrix flattened
    row-major. Both matrices carry a Gaussian random-walk prior along weeks
    with variance σ² and a marginal Gaussian prior with variance σ0².
    """
    name = "poisson"

    def __init__(self, week: Sequence[int], home: Sequence[int], away: Sequence[int], home_goals: Sequence[int],
                 away_goals: Sequence[int], n_teams: int, n_weeks: int, rw_variance: float = 0.01,
                 prior_variance: float = 10.0, team_names: Sequence[str] = None, first_week: int = 0):
        self.week = np.asarray(week, dtype=np.int64)
        self.home = np.asarray(home, dtype=np.int64)
        self.away = np.asarray(away, dtype=np.int64)
        self.home_goals = np.asarray(home_goals, dtype=np.float64)
        self.away_goals = np.asarray(away_goals, dtype=np.float64)
        n_games = self.week.size
        for name in ("home", "away", "home_goals", "away_goals"):
            if getattr(self, name).shape != (n_games,):
                raise DataError(f"Column '{name}' must have one entry per game")
        if n_games:
            if self.home_goals.min() < 0 or self.away_goals.min() < 0:
                raise DataError("Goal counts must be non-negative")
            if min(self.home.min(), self.away.min()) < 0 or max(self.home.max(), self.away.max()) >= n_teams:
                raise DataError("Team index missing from the team index map")
            if self.week.min() < 0 or self.week.max() >= n_weeks:
                raise DataError("Week index missing from the week index map")
            if np.any(self.home == self.away):
                raise DataError("A team cannot play itself")
        if not rw_variance > 0 or not prior_variance > 0:
            raise ModelError("Prior variances must be positive")
        self.n_teams = n_teams
        self.n_weeks = n_weeks
        self.rw_variance = rw_variance
        self.prior_variance = prior_variance
        self.team_names = list(team_names) if team_names is not None else [str(t) for t in range(n_teams)]
        self.first_week = first_week
        super().__init__(2 * n_teams * n_weeks, n_games)
        offset = n_teams * n_weeks
        self._attack_home = self.home * n_weeks + self.week
        self._defence_away = offset + self.away * n_weeks + self.week
        self._attack_away = self.away * n_weeks + self.week
        self._defence_home = offset + self.home * n_weeks + self.week

    def _predictors(self, theta: np.ndarray, rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        eta_home = theta[self._attack_home[rows]] + theta[self._defence_away[rows]]
        eta_away = theta[self._attack_away[rows]] + theta[self._defence_home[rows]]
        return eta_home, eta_away

    def _prior_value(self, theta: np.ndarray) -> float:
        walks = theta.reshape(2 * self.n_teams, self.n_weeks)
        increments = np.diff(walks, axis=1)
        return float(0.5 * (theta @ theta) / self.prior_variance + 0.5 * np.sum(increments ** 2) / self.rw_variance)

    def prior_grad(self, theta: np.ndarray) -> np.ndarray:
        walks = theta.reshape(2 * self.n_teams, self.n_weeks)
        increments = np.diff(walks, axis=1) / self.rw_variance
        result = walks / self.prior_variance
        result[:, :-1] -= increments
        result[:, 1:] += increments
        return result.ravel()

    @staticmethod
    def _negative_log_likelihood(eta: np.ndarray, goals: np.ndarray) -> np.ndarray:
        rate = softplus(eta)
        return rate - goals * np.log(rate)

    @staticmethod
    def _score(eta: np.ndarray, goals: np.ndarray) -> np.ndarray:
        """Derivative of the negative log-likelihood in the linear predictor."""
        return (1 - goals / softplus(eta)) * expit(eta)

    def value(self, theta: np.ndarray) -> float:
        rows = np.arange(self.n_data)
        eta_home, eta_away = self._predictors(theta, rows)
        likelihood = self._negative_log_likelihood(eta_home, self.home_goals)
        likelihood = likelihood + self._negative_log_likelihood(eta_away, self.away_goals)
        return float(likelihood.sum()) + self._prior_value(theta)

    def grad(self, theta: np.ndarray) -> np.ndarray:
        rows = np.arange(self.n_data)
        eta_home, eta_away = self._predictors(theta, rows)
        score_home = self._score(eta_home, self.home_goals)
        score_away = self._score(eta_away, self.away_goals)
        result = self.prior_grad(theta)
        np.add.at(result, self._attack_home, score_home)
        np.add.at(result, self._defence_away, score_home)
        np.add.at(result, self._attack_away, score_away)
        np.add.at(result, self._defence_home, score_away)
        return result

    def grad_components(self, indices: np.ndarray, theta: np.ndarray) -> np.ndarray:
        rows = self.check_indices(indices) - 1
        eta_home, eta_away = self._predictors(theta, rows)
        score_home = self._score(eta_home, self.home_goals[rows])
        score_away = self._score(eta_away, self.away_goals[rows])
        result = np.zeros((rows.size, self.dim))
        position = np.arange(rows.size)
        np.add.at(result, (position, self._attack_home[rows]), score_home)
        np.add.at(result, (position, self._defence_away[rows]), score_home)
        np.add.at(result, (position, self._attack_away[rows]), score_away)
        np.add.at(result, (position, self._defence_home[rows]), score_away)
        return result

    def _prior_hessian(self) -> np.ndarray:
        n = self.n_weeks
        walk = np.zeros((n, n))
        if n > 1:
            idx = np.arange(n - 1)
            walk[idx, idx] += 1
            walk[idx + 1, idx + 1] += 1
            walk[idx, idx + 1] -= 1
            walk[idx + 1, idx] -= 1
        walk /= self.rw_variance
        result = np.kron(np.eye(2 * self.n_teams), walk)
        result[np.diag_indices(self.dim)] += 1 / self.prior_variance
        return result

    def hessian(self, theta: np.ndarray) -> np.ndarray:
        result = self._prior_hessian()
        rows = np.arange(self.n_data)
        eta_home, eta_away = self._predictors(theta, rows)
        pairs = ((eta_home, self.home_goals, self._attack_home, self._defence_away),
                 (eta_away, self.away_goals, self._attack_away, self._defence_home))
        for eta, goals, attack, defence in pairs:
            rate = softplus(eta)
            slope = expit(eta)
            curvature = slope * (1 - slope) * (1 - goals / rate) + goals * slope ** 2 / rate ** 2
            for i, j in ((attack, attack), (attack, defence), (defence, attack), (defence, defence)):
                np.add.at(result, (i, j), curvature)
        return result


def poisson_value_grad(model: PoissonSoccer, theta: np.ndarray) -> Tuple[float, np.ndarray]:
    if np.shape(theta) != (model.dim,):
        raise ModelError(f"Expected a parameter vector of length {model.dim}")
    return model.value_grad(theta)
