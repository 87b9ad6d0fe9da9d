import itertools

import numpy as np
import pytest

from ububu.core import NoiseKey, RunConfig, Stream
from ububu.errors import ParameterError
from ububu.estimator import (
    DifferenceSample,
    EstimatorReport,
    LevelSchedule,
    assemble_s,
    d0,
    d_llp1,
    make_schedule,
    run_ensemble,
    run_estimator,
    run_ububu,
    run_ububu_approx,
    run_ububu_sg,
)
from ububu.functions import Coordinate, FunctionSet, Norm, Squared, TestFunction, coordinates
from ububu.models import GaussianTarget, QuarticToy, ingest_synthetic, precondition
from ububu.rhmc import RhmcConfig, autotune, run_rhmc


class Constant(TestFunction):
    def __init__(self, c):
        super().__init__("const")
        self.c = c

    def __call__(self, positions):
        return np.full(np.atleast_2d(positions).shape[0], self.c)


def first_coordinate(positions):
    return positions[:, 0]


@pytest.fixture
def target():
    return GaussianTarget(np.array([1.0, 2.0]), center=np.array([0.5, -0.5]))


def _config(mode="exact", **changes):
    options = {"h0": 0.5, "K": 2, "N": 4, "gradient_mode": mode, "B0": 3, "B": 1, "seed": 17}
    options.update(changes)
    return RunConfig(**options)


def test_schedule_counts():
    schedule = make_schedule(256, 1 / 16, 4.0, NoiseKey(0, stream=Stream.SCHEDULE))
    assert schedule.L == 2
    assert schedule.counts[:3] == [16, 4, 1]
    assert schedule.expected(3) == pytest.approx(0.25)
    assert all(c in (0, 1) for c in schedule.counts[3:])


def test_schedule_small_budget():
    schedule = make_schedule(8, 1 / 16, 4.0, NoiseKey(1))
    assert schedule.L == 0
    assert schedule.counts[0] == 1


def test_schedule_is_reproducible():
    first = make_schedule(1000, 1 / 64, 4.0, NoiseKey(3))
    second = make_schedule(1000, 1 / 64, 4.0, NoiseKey(3))
    assert first == second
    assert LevelSchedule.from_dict(first.as_dict()) == first


@pytest.mark.parametrize("N, c_N, phi_N", [(0, 0.1, 4.0), (10, 0.0, 4.0), (10, 0.1, 2.0)])
def test_schedule_rejects(N, c_N, phi_N):
    with pytest.raises(ParameterError):
        make_schedule(N, c_N, phi_N, NoiseKey(0))


def test_bernoulli_levels_have_the_expected_rate():
    schedules = [make_schedule(256, 1 / 16, 4.0, NoiseKey(seed)) for seed in range(400)]
    hits = sum(len(s.counts) > 3 and s.counts[3] == 1 for s in schedules)
    assert 60 <= hits <= 140


def test_d0_constant():
    assert d0(np.ones((5, 3)), Constant(2.5)) == pytest.approx(2.5)


def test_d0_average():
    assert d0(np.array([[1.0, 0.0], [3.0, 0.0]]), first_coordinate) == pytest.approx(2.0)


def test_d_llp1_identical_samples():
    samples = np.arange(6.0).reshape(3, 2)
    assert d_llp1(samples, samples.copy(), first_coordinate) == 0.0


def test_d_llp1_constant():
    assert d_llp1(np.zeros((2, 2)), np.ones((2, 2)), Constant(1.0)) == 0.0


def test_d_llp1_shape_mismatch():
    with pytest.raises(ParameterError):
        d_llp1(np.zeros((2, 2)), np.zeros((3, 2)), first_coordinate)


def _schedule(L, counts, probabilities):
    return LevelSchedule(N=16, c_N=0.25, phi_N=4.0, L=L, counts=counts, probabilities=probabilities)


def test_assemble_collapses_without_tail():
    schedule = _schedule(0, [1], [1.0])
    assert assemble_s(schedule, 1.0, {}, {0: 0.3}, 0.25) == pytest.approx(1.0 + 0.3 / 0.75)


def test_assemble_plain_estimator():
    schedule = _schedule(1, [4, 1, 1], [4.0, 1.0, 0.25])
    tail = {1: 0.2, 2: 0.05}
    expected = 1.0 + 0.1 + 0.2 + 0.05 / 0.25
    assert assemble_s(schedule, 1.0, {0: 0.1}, tail, 0.0) == pytest.approx(expected)


def test_assemble_richardson_correction():
    schedule = _schedule(1, [4, 1, 1], [4.0, 1.0, 0.25])
    tail = {1: 0.2, 2: 0.05}
    expected = 1.0 + 0.1 + 0.2 / 0.75 + (0.05 - 0.2 * 0.25) / 0.25
    assert assemble_s(schedule, 1.0, {0: 0.1}, tail, 0.25) == pytest.approx(expected)


def test_assemble_rejects_c_r():
    with pytest.raises(ParameterError):
        assemble_s(_schedule(0, [1], [1.0]), 0.0, {}, {0: 0.0}, 0.5)


def test_assemble_needs_level_l():
    with pytest.raises(ParameterError):
        assemble_s(_schedule(0, [1], [1.0]), 0.0, {}, {}, 0.0)


def test_difference_sample_rejects_non_finite():
    from ububu.errors import NumericalError
    with pytest.raises(NumericalError):
        DifferenceSample("pair", 1, 0, [np.nan])


def test_constant_function_is_estimated_exactly(target):
    report = run_ububu(target, _config(), FunctionSet([Constant(2.5)]))
    assert report.estimate[0] == pytest.approx(2.5, abs=1e-12)
    assert report.second_moment[0] == pytest.approx(6.25, abs=1e-12)


def test_run_ububu_report(target):
    report = run_ububu(target, _config(), FunctionSet([Coordinate(0), Coordinate(1), Norm()]))
    assert report.mode == "exact"
    assert report.functions == ["x0", "x1", "norm"]
    assert report.value.shape == (6,)
    assert len(report.by_kind("d0")) == 4
    assert report.work.passes > 0
    np.testing.assert_allclose(report.recompute(), report.value)
    assert report.metadata["ess_normalisation"] == "ensemble"


def test_run_is_reproducible_across_thread_counts(target):
    functions = FunctionSet([Coordinate(0), Norm()])
    serial = run_ububu(target, _config(), functions, threads=1)
    parallel = run_ububu(target, _config(), functions, threads=4)
    np.testing.assert_array_equal(serial.value, parallel.value)
    assert serial.work == parallel.work


def test_report_serialisation(target):
    report = run_ububu(target, _config(), FunctionSet([Coordinate(0)]))
    restored = EstimatorReport.from_dict(report.as_dict())
    np.testing.assert_array_equal(restored.value, report.value)
    np.testing.assert_array_equal(restored.recompute(), report.value)
    assert restored.work.passes == report.work.passes


def test_mode_mismatch(target):
    with pytest.raises(ParameterError):
        run_ububu_approx(target, _config(), FunctionSet([Coordinate(0)]))


def test_run_ububu_approx_on_quartic():
    toy = QuarticToy(np.array([1.0, 2.0]), beta=0.5)
    report = run_ububu_approx(toy, _config("approx", tau=4), FunctionSet([Coordinate(0)]))
    assert report.mode == "approx"
    assert np.all(np.isfinite(report.value))
    assert report.work.hessian_products > 0


def test_run_ububu_sg_on_split_target():
    split = GaussianTarget.conditioned(2, 2.0, n_data=8, seed=1)
    report = run_ububu_sg(split, _config("svrg", N_b=2), FunctionSet([Coordinate(0)]))
    assert report.mode == "svrg"
    assert report.work.component_gradients > 0


def test_run_estimator_dispatch(target):
    report = run_estimator(target, _config(), FunctionSet([Coordinate(0)]))
    assert report.mode == "exact"


def test_ensemble_seeds(target):
    reports = run_ensemble(target, _config(), FunctionSet([Coordinate(0)]), [1, 2])
    assert [r.seed for r in reports] == [1, 2]
    assert not np.array_equal(reports[0].value, reports[1].value)


@pytest.mark.slow
def test_mean_of_quadratic_target(target):
    functions = FunctionSet([Coordinate(0), Coordinate(1)])
    reports = run_ensemble(target, _config(N=64, K=4, B0=None, B=None), functions, range(64), threads=4)
    estimates = np.array([r.estimate for r in reports])
    se = estimates.std(axis=0, ddof=1) / np.sqrt(len(reports))
    assert np.all(np.abs(estimates.mean(axis=0) - target.center) < 3 * se)


@pytest.fixture
def conditioned():
    return GaussianTarget.conditioned(2, 4.0, n_data=8, seed=3)


@pytest.mark.slow
@pytest.mark.parametrize("mode", ["exact", "svrg", "approx"])
def test_unbiased_first_and_second_moment(conditioned, mode):
    functions = FunctionSet([Coordinate(0), Squared(Coordinate(0))])
    config = RunConfig(h0=0.5, K=1, N=16, gradient_mode=mode, seed=0)
    estimates = np.array([r.estimate for r in run_ensemble(conditioned, config, functions, range(200))])
    se = estimates.std(axis=0, ddof=1) / np.sqrt(len(estimates))
    assert np.all(np.abs(estimates.mean(axis=0) - [0.0, 1.0]) <= 3 * se)


@pytest.mark.slow
def test_variance_halves_when_budget_doubles(conditioned):
    functions = FunctionSet([Coordinate(0), Coordinate(1), Squared(Coordinate(0)), Squared(Coordinate(1))])
    variances = {}
    for N, seeds in ((64, range(200)), (128, range(1000, 1200))):
        config = RunConfig(h0=0.5, K=1, N=N)
        estimates = np.array([r.estimate for r in run_ensemble(conditioned, config, functions, seeds)])
        variances[N] = estimates.var(axis=0, ddof=1)
    ratio = np.exp(np.mean(np.log(variances[128] / variances[64])))
    assert 0.375 <= ratio <= 0.667


@pytest.mark.slow
def test_estimators_agree_on_multinomial_posterior():
    model = precondition(ingest_synthetic("multinomial", {"n_classes": 3, "n_features": 4, "n_data": 200}, 6))
    functions = FunctionSet(coordinates(model.dim, range(5)))
    seeds = range(40)
    runs = {
        mode: [r.estimate for r in run_ensemble(model, RunConfig(h0=0.5, K=1, N=32, gradient_mode=mode),
                                                functions, seeds, threads=4)]
        for mode in ("exact", "svrg", "approx")
    }
    tuned = autotune(model, RhmcConfig.for_stepsize(0.5, model.hessian_at_min().m, K=500, burn_in=100))
    runs["rhmc"] = [run_rhmc(model, tuned, functions, replicate=r).estimate for r in seeds]

    summary = {mode: (np.mean(values, axis=0), np.std(values, axis=0, ddof=1) / np.sqrt(len(values)))
               for mode, values in runs.items()}
    for a, b in itertools.combinations(summary, 2):
        (mean_a, se_a), (mean_b, se_b) = summary[a], summary[b]
        assert np.all(np.abs(mean_a - mean_b) <= 3 * np.sqrt(se_a ** 2 + se_b ** 2)), (a, b)
