import math
from typing import Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from ububu.errors import ModelError
from ububu.models.potential import Potential


class MultinomialRegression(Potential):
    """Bayesian multinomial logistic regression.

    q = (q¹, ..., q^m) is stored row-major as an (m, d₀) matrix flattened to a
    vector of length m·d₀. Covariates end with the constant intercept 1.
    """
    name = "multinomial"

    def __init__(self, covariates: np.ndarray, labels: np.ndarray, n_classes: int, prior_variance: float = 0.1):
        covariates = np.asarray(covariates, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if covariates.ndim != 2 or labels.shape != (covariates.shape[0],):
            raise ModelError("Covariates must be an (N, d0) matrix with one label per row")
        if covariates.size and (covariates[:, :-1].min(initial=0) < 0 or covariates[:, :-1].max(initial=0) > 1):
            raise ModelError("Covariate entries must lie in [0, 1]")
        if covariates.size and not np.all(covariates[:, -1] == 1):
            raise ModelError("Covariates must end with the intercept 1")
        if labels.size and (labels.min() < 1 or labels.max() > n_classes):
            raise ModelError(f"Labels must lie in 1..{n_classes}")
        if not prior_variance > 0:
            raise ModelError("Prior variance must be positive")
        self.covariates = covariates
        self.labels = labels
        self.n_classes = n_classes
        self.n_features = covariates.shape[1]
        self.prior_variance = prior_variance
        self.prior_precision = 0.0 if math.isinf(prior_variance) else 1 / prior_variance
        super().__init__(n_classes * self.n_features, labels.size)

    def _weights(self, q: np.ndarray) -> np.ndarray:
        return q.reshape(self.n_classes, self.n_features)

    def _logits(self, q: np.ndarray, covariates: np.ndarray) -> np.ndarray:
        return covariates @ self._weights(q).T

    def _residuals(self, q: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """softmax(⟨x^j, q^k⟩)_k − onehot(y^j) for the given 0-based rows."""
        residuals = softmax(self._logits(q, self.covariates[rows]), axis=1)
        residuals[np.arange(rows.size), self.labels[rows] - 1] -= 1
        return residuals

    def value(self, q: np.ndarray) -> float:
        logits = self._logits(q, self.covariates)
        likelihood = logsumexp(logits, axis=1) - logits[np.arange(self.n_data), self.labels - 1]
        return float(likelihood.sum() + 0.5 * self.prior_precision * (q @ q))

    def grad(self, q: np.ndarray) -> np.ndarray:
        residuals = self._residuals(q, np.arange(self.n_data))
        return (residuals.T @ self.covariates).ravel() + self.prior_precision * q

    def value_grad(self, q: np.ndarray) -> Tuple[float, np.ndarray]:
        return self.value(q), self.grad(q)

    def prior_grad(self, q: np.ndarray) -> np.ndarray:
        return self.prior_precision * q

    def grad_components(self, indices: np.ndarray, q: np.ndarray) -> np.ndarray:
        rows = self.check_indices(indices) - 1
        residuals = self._residuals(q, rows)
        return np.einsum("jk,jb->jkb", residuals, self.covariates[rows]).reshape(rows.size, self.dim)

    def hessian(self, q: np.ndarray) -> np.ndarray:
        p = softmax(self._logits(q, self.covariates), axis=1)
        m, d0 = self.n_classes, self.n_features
        result = np.empty((m, d0, m, d0))
        for a in range(m):
            for b in range(a, m):
                w = p[:, a] * ((a == b) - p[:, b])
                block = (self.covariates.T * w) @ self.covariates
                result[a, :, b, :] = block
                result[b, :, a, :] = block.T
        result = result.reshape(self.dim, self.dim)
        result[np.diag_indices(self.dim)] += self.prior_precision
        return result

    def predictive_probability(self, q: np.ndarray, covariate: np.ndarray, label: int) -> np.ndarray:
        """p(y = label | covariate, q) for one or many parameter vectors q (..., d)."""
        q = np.asarray(q)
        weights = q.reshape(q.shape[:-1] + (self.n_classes, self.n_features))
        return softmax(weights @ covariate, axis=-1)[..., label - 1]


def multinomial_value_grad(model: MultinomialRegression, q: np.ndarray) -> Tuple[float, np.ndarray]:
    if np.shape(q) != (model.dim,):
        raise ModelError(f"Expected a parameter vector of length {model.dim}")
    return model.value_grad(q)
