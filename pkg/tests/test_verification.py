import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cpdsymp.oracle import OracleConfig, oracle_solve
from cpdsymp.problems import State, make_problem, problem_from_table
from cpdsymp.stepper import FixedPointControls, StepperCollection, integrate, propagate
from cpdsymp.steppers.exponential import FOURTH_ORDER_COEFFICIENTS, SECOND_ORDER_COEFFICIENTS, SC2O2, CoefficientSet
from cpdsymp.steppers.frozen import SG1O4
from cpdsymp.utils import ConfigError, DomainError, OracleError, UnsupportedOperationError
from cpdsymp.verification import (
    ConvergenceReport,
    EnergySeries,
    ErrorMetrics,
    condition_samples,
    energy_series,
    eps_uniformity,
    fit_order,
    metric_weights,
    symplectic_condition_residuals,
    symplecticity_report,
    symplecticity_residual,
    uniformity_ratio,
)

TIGHT = FixedPointControls({"tolerance": 1e-15, "max_iterations": 100})
SYMPLECTIC_CONTROLS = FixedPointControls({"tolerance": 1e-14, "max_iterations": 100})


def free_problem(eps, field=(0.3, -0.4, 1.2)):
    return problem_from_table(
        {"field": list(field), "potential_scale": 0.0, "x0": [0.1, -0.2, 0.3], "v0": [0.5, 0.7, -0.1]}, eps
    )


def test_metric_conventions():
    assert metric_weights("error") == (0, 0)
    assert metric_weights("position") is None
    assert metric_weights("error2") == (0, 1)
    assert metric_weights("error4") == (2, 3)
    assert metric_weights("error2", "general-field") == (1, 2)
    assert metric_weights("error4", "general-field") == (3, 4)
    assert metric_weights("error1", "homogeneous", {"error1": [0, 0]}) == (0.0, 0.0)
    with pytest.raises(ConfigError):
        metric_weights("error3")
    with pytest.raises(ConfigError):
        metric_weights("error2", "tokamak")


def test_error_metrics():
    reference = State(1.0, np.array([3.0, 4.0, 0.0]), np.array([0.0, 0.0, 2.0]))
    state = State(1.0, np.array([3.0, 4.5, 0.0]), np.array([0.0, 0.1, 2.0]))
    metrics = ErrorMetrics.between(state, reference, 0.1)
    assert metrics.err_x == pytest.approx(0.1)
    assert metrics.err_v == pytest.approx(0.05)
    assert metrics.error == pytest.approx(0.15)
    assert metrics.select("error2") == pytest.approx(0.1 + 0.1 * 0.05)
    assert metrics.select("error4", "general-field") == pytest.approx(1e-3 * 0.1 + 1e-4 * 0.05)
    assert metrics.select("velocity") == pytest.approx(0.05)

    with pytest.raises(DomainError):
        ErrorMetrics.between(state, State(1.0, np.zeros(3), reference.v), 0.1)


def test_fit_order_recovers_power_law():
    points = [(h, 3.0 * h**2) for h in (0.1, 0.05, 0.025, 0.0125)]
    fit = fit_order(points)
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert math.exp(fit.intercept) == pytest.approx(3.0, rel=1e-10)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)

    noisy = [(h, 2.0 * h**4 * (1.1 if i % 2 else 0.9)) for i, h in enumerate((0.1, 0.05, 0.025, 0.0125))]
    fit = fit_order(noisy)
    assert 3.8 <= fit.slope <= 4.2
    assert fit.residual > 0.0


@pytest.mark.parametrize("points", [
    [(0.1, 1e-3), (0.05, 2e-4)],
    [(0.1, 1e-3), (0.05, 0.0), (0.025, 1e-5)],
    [(0.1, 1e-3), (0.1, 2e-4), (0.025, 1e-5)],
])
def test_fit_order_rejects_degenerate_input(points):
    with pytest.raises(DomainError):
        fit_order(points)


def test_convergence_report_orders_by_step():
    report = ConvergenceReport("SC2O2", 0.1, "error2")
    for h in (0.025, 0.1, 0.05):
        report.add(h, ErrorMetrics(0.1, h**2, 10.0 * h**2))
    assert [h for h, _ in report.values()] == [0.1, 0.05, 0.025]
    assert report.values()[0][1] == pytest.approx(0.01 + 0.1 * 0.1)
    assert report.slope == pytest.approx(2.0, abs=1e-12)
    assert report.fit("position").slope == pytest.approx(2.0, abs=1e-12)


def test_condition_samples():
    samples = condition_samples(100, seed=3)
    assert samples.shape == (100, 3)
    assert samples[:, 0].min() >= 1e-3 and samples[:, 0].max() <= 50.0
    assert np.all((samples[:, 1:] >= 0.0) & (samples[:, 1:] <= 1.0))
    assert np.array_equal(samples, condition_samples(100, seed=3))


@pytest.mark.parametrize("coefficients", [SECOND_ORDER_COEFFICIENTS, FOURTH_ORDER_COEFFICIENTS])
def test_coefficient_sets_satisfy_symplectic_conditions(coefficients):
    residuals = symplectic_condition_residuals(coefficients, condition_samples())
    assert residuals.condition_i <= 1e-12
    assert residuals.condition_ii <= 1e-11
    assert residuals.condition_iii <= 1e-11
    assert_allclose(residuals.d, 1.0, atol=1e-12)


def test_perturbed_coefficients_break_condition_i():
    residuals = symplectic_condition_residuals(CoefficientSet("perturbed", 0.0, beta_scale=1.01), condition_samples())
    assert residuals.condition_i >= 1e-3
    assert residuals.worst >= residuals.condition_i


@pytest.mark.parametrize("method", ["SC1O2", "SC2O2", "SC1O4", "SC2O4", "RKO2", "RKO4"])
@pytest.mark.parametrize("eps", [1.0, 0.01])
@pytest.mark.parametrize("h", [0.1, 0.01])
def test_symplectic_methods_have_small_residual(method, eps, h):
    stepper = StepperCollection().get(method, SYMPLECTIC_CONTROLS)
    report = symplecticity_report(stepper, make_problem("P1", eps), h, samples=4)
    assert len(report.residuals) == 4
    assert report.max_residual <= 1e-5


def test_reference_flow_is_symplectic():
    stepper = StepperCollection().get("REFERENCE-FLOW", TIGHT)
    problem = make_problem("P1", 1.0)
    assert symplecticity_residual(stepper, problem, problem.initial_state(), 0.1) <= 1e-6


def test_implicit_euler_is_not_symplectic():
    stepper = StepperCollection().get("EULER", TIGHT)
    problem = make_problem("P1", 1.0)
    assert symplecticity_residual(stepper, problem, problem.initial_state(), 0.2) >= 1e-3
    assert symplecticity_residual(stepper, problem, problem.initial_state(), 0.1) >= 1e-3


def test_symplecticity_needs_a_vector_potential():
    problem = make_problem("P3", 0.5)
    with pytest.raises(UnsupportedOperationError):
        symplecticity_residual(SG1O4(), problem, problem.initial_state(), 0.1)


def test_symplecticity_report_samples():
    problem = make_problem("P1", 1.0)
    report = symplecticity_report(SC2O2(), problem, 0.1, samples=3, seed=11)
    assert len(report.residuals) == 3
    assert np.array_equal(report.samples[0].x, problem.x0)
    assert report.max_residual <= 1e-6
    again = symplecticity_report(SC2O2(), problem, 0.1, samples=3, seed=11)
    assert np.array_equal(report.samples[2].v, again.samples[2].v)


def test_energy_series():
    problem = make_problem("P1", 0.1)
    series = energy_series(integrate(SC2O2(), problem, 0.05, 40))
    assert series.errors[0] == 0.0
    assert series.times[-1] == pytest.approx(2.0)
    assert series.max_error < 1e-3

    free = energy_series(integrate(SC2O2(), free_problem(0.1), 0.1, 30))
    assert free.max_error <= 1e-14


def test_energy_series_needs_nonzero_initial_energy():
    problem = problem_from_table({"potential_scale": 0.0, "x0": [1.0, 0.0, 0.0], "v0": [0.0, 0.0, 0.0]}, 1.0)
    with pytest.raises(DomainError):
        energy_series(integrate(SC2O2(), problem, 0.1, 2))


def test_drift_ratio():
    times = np.linspace(0.0, 10.0, 11)
    flat = EnergySeries(times, np.where(times > 0, 1e-6, 0.0))
    assert flat.drift_ratio == pytest.approx(1.0)
    drifting = EnergySeries(times, 1e-6 * times)
    assert drifting.halves() == (pytest.approx(5e-6), pytest.approx(1e-5))
    assert drifting.drift_ratio == pytest.approx(2.0)
    assert EnergySeries(times, np.zeros(11)).drift_ratio == 1.0


@pytest.mark.slow
def test_long_time_energy_of_sc2o2():
    series = energy_series(integrate(SC2O2(), make_problem("P1", 1.0), 0.01, 100_000, thin=100))
    assert series.max_error <= 1e-2
    assert series.drift_ratio <= 2.0


def test_uniformity_ratio():
    assert uniformity_ratio([2e-4]) == 1.0
    assert uniformity_ratio([1e-4, 5e-4, 2e-4]) == pytest.approx(5.0)
    with pytest.raises(DomainError):
        uniformity_ratio([])
    with pytest.raises(DomainError):
        uniformity_ratio([1e-3, 0.0])


def test_eps_uniformity_guards():
    with pytest.raises(ConfigError):
        eps_uniformity("SC2O2", lambda eps: make_problem("P1", eps), 0.05, [0.1, 0.01])
    with pytest.raises(ConfigError):
        eps_uniformity("SC2O2", lambda eps: make_problem("P1", eps), 0.05, [])


def test_eps_uniformity_single_value():
    oracle = OracleConfig({"refinement": 8})
    report = eps_uniformity("SC2O2", lambda eps: make_problem("P1", eps), 0.01, [0.1], oracle=oracle)
    assert report.ratio == 1.0
    assert report.table[0][0] == 0.1


@pytest.mark.slow
def test_sc2o2_position_error_is_uniform_in_eps():
    report = eps_uniformity(
        "SC2O2", lambda eps: make_problem("P1", eps), 1e-3, [0.1, 0.01, 0.001], oracle=OracleConfig({"refinement": 16})
    )
    assert report.ratio <= 10.0


def test_oracle_reproduces_the_free_flow():
    problem = free_problem(0.1)
    solution = oracle_solve(problem, 1.0, 0.01, OracleConfig({"refinement": 4}))
    exact = problem.exact_free_solution(1.0)
    assert_allclose(solution.state.x, exact.x, atol=1e-12)
    assert_allclose(solution.state.v, exact.v, atol=1e-12)
    assert solution.method == "SC2O4"
    assert solution.h_ref == pytest.approx(0.0025)
    assert solution.passed


def test_oracle_conserves_energy():
    problem = make_problem("P1", 1.0)
    solution = oracle_solve(problem, 1.0, 0.05, OracleConfig({"refinement": 8}))
    assert problem.energy(solution.state) == pytest.approx(problem.energy(problem.initial_state()), rel=1e-8)


def test_oracle_config_validation():
    assert OracleConfig().refinement == 128
    assert OracleConfig().method_for(make_problem("P1", 1.0)) == "SC2O4"
    assert OracleConfig().method_for(make_problem("P3", 1.0)) == "SG1O4"
    assert OracleConfig({"method": "scipy:Radau"}).is_scipy
    for bad in ({"refinement": 1}, {"tolerance": 0.0}, {"method": "scipy:LSODA"}):
        with pytest.raises(ConfigError):
            OracleConfig(bad)


def test_oracle_reports_inconsistent_refinement():
    with pytest.raises(OracleError, match="not self-consistent"):
        oracle_solve(make_problem("P1", 1.0), 1.0, 0.1, OracleConfig({"refinement": 2, "tolerance": 1e-300}))


def test_scipy_oracle_on_general_field():
    problem = make_problem("P2", 0.5)
    solution = oracle_solve(problem, 1.0, 0.01, OracleConfig({"method": "scipy:DOP853"}))
    assert solution.h_ref is None
    assert solution.as_dict()["h_ref"] == "adaptive"
    fine = propagate(SG1O4(TIGHT), problem, 0.005, 200)
    assert_allclose(solution.state.x, fine.x, atol=1e-6)
    assert_allclose(solution.state.v, fine.v, atol=1e-6)
