import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

from ububu.core import NoiseKey, Slot, Stream
from ububu.errors import DiagnosticsError, InstabilityError, ParameterError
from ububu.estimator import EstimatorReport
from ububu.integrators import ou_coeffs

logger = logging.getLogger(__name__)

MIN_BOOTSTRAP_RUNS = 8
ORACLE_KINDS = ("ubu", "em", "oho")


@dataclass
class VarianceBreakdown:
    """Var(S(c_R)) = Var(D0)/N + Σ_{l<L} Var(D_{l,l+1})/N_{l,l+1} + Var(tail).

    Levels with a single pooled sample have no variance estimate; they are
    listed in `unavailable` and left out of the total.
    """
    var_d0: np.ndarray
    n_d0: int
    level_variances: Dict[int, np.ndarray]
    level_counts: Dict[int, int]
    tail_variance: np.ndarray
    total: np.ndarray
    unavailable: List[int] = field(default_factory=list)


def _sample_variance(values: np.ndarray) -> np.ndarray:
    return np.var(values, axis=0, ddof=1)


def variance_breakdown(reports: Sequence[EstimatorReport]) -> VarianceBreakdown:
    if len(reports) < 2:
        raise DiagnosticsError(f"Variance breakdown needs at least 2 independent runs, got {len(reports)}")
    modes = {r.mode for r in reports}
    if len(modes) != 1:
        raise DiagnosticsError(f"Reports of different modes cannot be pooled: {sorted(modes)}")

    if reports[0].schedule is None:
        direct = _sample_variance(np.array([r.value for r in reports]))
        return VarianceBreakdown(direct, 1, {}, {}, np.zeros_like(direct), direct)

    d0 = np.array([s.value for r in reports for s in r.by_kind("d0")])
    n_d0 = len(reports[0].by_kind("d0"))
    var_d0 = _sample_variance(d0)
    total = var_d0 / n_d0

    pooled: Dict[int, List[np.ndarray]] = {}
    counts: Dict[int, int] = {}
    for report in reports:
        for level, values in report.level_samples().items():
            pooled.setdefault(level, []).extend(values)
            counts[level] = values.shape[0]
    level_variances, unavailable = {}, []
    for level in sorted(pooled):
        values = np.array(pooled[level])
        if values.shape[0] < 2:
            unavailable.append(level)
            logger.warning(f"Level {level} has a single difference sample; its variance is unavailable")
            continue
        level_variances[level] = _sample_variance(values)
        total = total + level_variances[level] / counts[level]

    tail_variance = _sample_variance(np.array([r.tail_sum() for r in reports]))
    total = total + tail_variance
    return VarianceBreakdown(var_d0, n_d0, level_variances, counts, tail_variance, total, unavailable)


def grads_per_ess(work: float, ess_value):
    return work / np.asarray(ess_value, dtype=np.float64)


def bootstrap_ci(runs: Sequence, n_boot: int = 2000, key: NoiseKey = None,
                 statistic: Callable[[Sequence], np.ndarray] = None, level: float = 0.95
                 ) -> Tuple[np.ndarray, np.ndarray]:
    """Percentile interval of `statistic` over runs resampled with replacement.

    The default statistic is the mean of per-run values.
    """
    if len(runs) < MIN_BOOTSTRAP_RUNS:
        raise DiagnosticsError(f"Bootstrap needs at least {MIN_BOOTSTRAP_RUNS} runs, got {len(runs)}")
    if n_boot < 1:
        raise ParameterError(f"Number of bootstrap resamples must be positive, got {n_boot}")
    if statistic is None:
        def statistic(sample):
            return np.mean(np.asarray(sample, dtype=np.float64), axis=0)
    key = key if key is not None else NoiseKey(0, slot=Slot.GAUSS, stream=Stream.DIAGNOSTICS)
    indices = key.generator().integers(0, len(runs), size=(n_boot, len(runs)))
    values = np.array([statistic([runs[i] for i in row]) for row in indices], dtype=np.float64)
    tail = (1 - level) / 2 * 100
    with np.errstate(invalid="ignore"):
        lo, hi = np.nanpercentile(values, [tail, 100 - tail], axis=0)
    return lo, hi


@dataclass
class EssReport:
    """Effective sample size of one estimator run: ESS = Var_π(f)/Var(S(c_R))."""
    functions: List[str]
    mean: np.ndarray
    posterior_variance: np.ndarray
    estimator_variance: np.ndarray
    ess: np.ndarray
    work: float
    grads_per_ess: np.ndarray
    ci: Optional[Tuple[np.ndarray, np.ndarray]] = None
    normalisation: str = "ensemble"

    @property
    def worst(self) -> float:
        return float(np.max(self.grads_per_ess))


def _ess_parts(reports: Sequence[EstimatorReport]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    n = reports[0].n_functions
    values = np.array([r.value for r in reports])
    mean = values[:, :n].mean(axis=0)
    posterior_variance = values[:, n:].mean(axis=0) - mean ** 2
    estimator_variance = variance_breakdown(reports).total[:n]
    work = float(np.mean([r.work.passes for r in reports]))
    return mean, posterior_variance, estimator_variance, work


def ess(reports: Sequence[EstimatorReport], n_boot: int = 2000, key: NoiseKey = None) -> EssReport:
    """ESS and gradient work per effective sample from independent runs of one estimator.

    Work is counted in full-data passes per run; the confidence interval
    of grads/ESS is a percentile bootstrap over runs, widened to contain the
    point estimate.
    """
    mean, posterior_variance, estimator_variance, work = _ess_parts(reports)
    if np.any(posterior_variance <= 0):
        bad = [f for f, v in zip(reports[0].functions, posterior_variance) if v <= 0]
        raise DiagnosticsError(f"Non-positive posterior variance estimate for: {', '.join(bad)}")
    with np.errstate(divide="ignore"):
        ess_value = posterior_variance / estimator_variance
    point = grads_per_ess(work, ess_value)

    ci = None
    if len(reports) >= MIN_BOOTSTRAP_RUNS:
        def statistic(sample):
            _, var_pi, var_s, w = _ess_parts(sample)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(var_pi > 0, w * var_s / var_pi, np.nan)

        lo, hi = bootstrap_ci(list(reports), n_boot, key, statistic)
        ci = (np.minimum(lo, point), np.maximum(hi, point))
    else:
        logger.warning(f"Only {len(reports)} runs; no bootstrap interval (needs {MIN_BOOTSTRAP_RUNS})")
    return EssReport(list(reports[0].functions), mean, posterior_variance, estimator_variance, ess_value, work,
                     point, ci)


@dataclass
class OrderFit:
    slope: float
    stderr: float
    intercept: float


def strong_order_fit(stepsizes: Sequence[float], gaps: Sequence[float]) -> OrderFit:
    """Least-squares slope of log(gap) against log(h)."""
    h = np.asarray(stepsizes, dtype=np.float64)
    gaps = np.asarray(gaps, dtype=np.float64)
    if h.shape != gaps.shape or h.ndim != 1:
        raise ParameterError("Stepsizes and gaps must be vectors of equal length")
    if h.size < 4:
        raise ParameterError(f"Order fit needs at least 4 stepsizes, got {h.size}")
    if np.any(h <= 0) or not np.all(np.isfinite(gaps)) or np.any(gaps <= 0):
        raise ParameterError("Stepsizes and gaps must be positive and finite")
    if h.max() / h.min() < 8:
        raise ParameterError("Stepsizes must span at least a factor of 8")
    order = np.argsort(h)
    fit = stats.linregress(np.log(h[order]), np.log(gaps[order]))
    return OrderFit(float(fit.slope), float(fit.stderr), float(fit.intercept))


@dataclass
class OracleMoments:
    """Stationary moments of a linear kernel on a quadratic target."""
    mean: np.ndarray
    cov_x: np.ndarray
    cov_xv: np.ndarray
    cov_v: np.ndarray


def _u_map(s: float, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    c = ou_coeffs(s, gamma)
    transition = np.array([[1.0, c.F], [0.0, c.eta]])
    var_x = 2 / gamma * (s - 2 * c.F + c.var2)
    cov = 2 * (c.F - c.var2)
    var_v = 2 * gamma * c.var2
    return transition, np.array([[var_x, cov], [cov, var_v]])


def _mode_transition(kind: str, lam: float, h: float, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    if kind == "em":
        return np.array([[1.0, h], [-h * lam, 1 - h * gamma]]), np.diag([0.0, 2 * gamma * h])
    u, q = _u_map(h / 2, gamma)
    b = np.array([[1.0, 0.0], [-h * lam, 1.0]])
    ub = u @ b
    return ub @ u, ub @ q @ ub.T + q


def lyapunov_oracle(precision: np.ndarray, h: float, gamma: float, kind: str = "ubu",
                    center: np.ndarray = None) -> OracleMoments:
    """Solve Σ = TΣTᵀ + Q per eigenmode of the precision and assemble full-space moments."""
    if kind not in ORACLE_KINDS:
        raise ParameterError(f"Unknown kernel '{kind}'. Possible kernels: {', '.join(ORACLE_KINDS)}")
    if not h > 0 or not gamma > 0:
        raise ParameterError("Stepsize and friction must be positive")
    precision = np.asarray(precision, dtype=np.float64)
    if precision.ndim == 1:
        eigvals, eigvecs = precision, np.eye(precision.size)
    else:
        eigvals, eigvecs = linalg.eigh((precision + precision.T) / 2)
    if np.any(eigvals <= 0):
        raise ParameterError("Precision must be positive-definite")
    center = np.zeros(eigvals.size) if center is None else np.asarray(center, dtype=np.float64)

    blocks = np.empty((eigvals.size, 2, 2))
    for i, lam in enumerate(eigvals):
        if kind == "oho":
            blocks[i] = np.diag([1 / lam, 1.0])
            continue
        transition, noise = _mode_transition(kind, lam, h, gamma)
        radius = np.max(np.abs(np.linalg.eigvals(transition)))
        if radius >= 1:
            raise InstabilityError(f"{kind} kernel is unstable at h={h} for eigenvalue {lam:.4g} "
                                   f"(spectral radius {radius:.4g})")
        blocks[i] = linalg.solve_discrete_lyapunov(transition, noise)

    def assemble(values: np.ndarray) -> np.ndarray:
        return (eigvecs * values) @ eigvecs.T

    return OracleMoments(center, assemble(blocks[:, 0, 0]), assemble(blocks[:, 0, 1]), assemble(blocks[:, 1, 1]))
