import logging
from typing import Callable, Dict, List, Sequence

import numpy as np

from ububu.errors import DiagnosticsError, NumericalError, ParameterError
from ububu.models.multinomial import MultinomialRegression

logger = logging.getLogger(__name__)

PREDICTIVE_BAND = (0.05, 0.95)


class TestFunction:
    """Scalar f(x) evaluated row-wise on an array of positions (K, d)."""
    __test__ = False
    kind: str = None

    def __init__(self, name: str):
        self.name = name

    def __call__(self, positions: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Please implement this method")

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self.name!r})"


class Coordinate(TestFunction):
    kind = "coordinates"

    def __init__(self, index: int):
        if index < 0:
            raise ParameterError(f"Coordinate index must be non-negative, got {index}")
        super().__init__(f"x{index}")
        self.index = index

    def __call__(self, positions: np.ndarray) -> np.ndarray:
        positions = np.atleast_2d(positions)
        if self.index >= positions.shape[1]:
            raise ParameterError(f"Coordinate {self.index} out of range for dimension {positions.shape[1]}")
        return positions[:, self.index]


class Norm(TestFunction):
    kind = "norm"

    def __init__(self):
        super().__init__("norm")

    def __call__(self, positions: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.atleast_2d(positions), axis=1)


class Predictive(TestFunction):
    """Posterior predictive probability of `label` at one covariate vector."""
    kind = "predictive"

    def __init__(self, model: MultinomialRegression, covariate: np.ndarray, label: int, name: str = None):
        super().__init__(name or f"p{label}")
        self.model = model
        self.covariate = np.asarray(covariate, dtype=np.float64)
        self.label = label

    def __call__(self, positions: np.ndarray) -> np.ndarray:
        return self.model.predictive_probability(np.atleast_2d(positions), self.covariate, self.label)


class Squared(TestFunction):
    def __init__(self, base: TestFunction):
        super().__init__(f"{base.name}^2")
        self.base = base

    def __call__(self, positions: np.ndarray) -> np.ndarray:
        return self.base(positions) ** 2


class FunctionSet:
    """Ordered test functions; `evaluate` returns a (K, n) matrix."""

    def __init__(self, functions: Sequence[TestFunction]):
        if not functions:
            raise ParameterError("At least one test function is required")
        self.functions = list(functions)

    def __len__(self) -> int:
        return len(self.functions)

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.functions]

    def with_squares(self) -> "FunctionSet":
        return FunctionSet(self.functions + [Squared(f) for f in self.functions])

    def evaluate(self, positions: np.ndarray) -> np.ndarray:
        values = np.column_stack([f(positions) for f in self.functions]).astype(np.float64)
        if not np.all(np.isfinite(values)):
            bad = [f.name for f, ok in zip(self.functions, np.isfinite(values).all(axis=0)) if not ok]
            raise NumericalError(f"Non-finite test function values: {', '.join(bad)}")
        return values


def coordinates(dim: int, indices: Sequence[int] = None, **_) -> List[TestFunction]:
    indices = range(dim) if indices is None else indices
    return [Coordinate(i) for i in indices]


def norm(dim: int, **_) -> List[TestFunction]:
    return [Norm()]


def predictive(dim: int, model: MultinomialRegression = None, x_map: np.ndarray = None, count: int = 10,
               **_) -> List[TestFunction]:
    """Predictive probabilities at data covariates whose MAP probability lies in the band.

    The label used for each covariate is its observed label.
    """
    if not isinstance(model, MultinomialRegression):
        raise DiagnosticsError("Predictive test functions need a multinomial regression model")
    x_map = model.minimizer() if x_map is None else x_map
    low, high = PREDICTIVE_BAND
    result = []
    for row in range(model.n_data):
        covariate, label = model.covariates[row], int(model.labels[row])
        p = float(model.predictive_probability(x_map, covariate, label))
        if low <= p <= high:
            result.append(Predictive(model, covariate, label, name=f"p{label}@{row + 1}"))
            if len(result) == count:
                break
    if not result:
        raise DiagnosticsError(f"No covariate has a MAP predictive probability in {PREDICTIVE_BAND}")
    logger.debug(f"Selected {len(result)} predictive test functions")
    return result


FUNCTIONS: Dict[str, Callable[..., List[TestFunction]]] = {
    Coordinate.kind: coordinates,
    Norm.kind: norm,
    Predictive.kind: predictive,
}


def register_function(kind: str, factory: Callable[..., List[TestFunction]]) -> None:
    """Make `kind` available to experiment configurations.

    `factory(dim, **options)` returns the test functions of that kind.
    """
    if kind in FUNCTIONS:
        raise ParameterError(f"Test function kind '{kind}' is already registered")
    FUNCTIONS[kind] = factory


def make_functions(kind: str, dim: int, **options) -> List[TestFunction]:
    if kind not in FUNCTIONS:
        raise ParameterError(f"Unknown test function kind '{kind}'. Possible kinds: {', '.join(sorted(FUNCTIONS))}")
    return FUNCTIONS[kind](dim, **options)
