import numpy as np
import pytest
from numpy.testing import assert_allclose

from cpdsymp.oracle import OracleConfig
from cpdsymp.problems import make_problem, problem_from_table
from cpdsymp.stepper import FixedPointControls, StepperCollection, integrate, propagate
from cpdsymp.steppers.exponential import SC2O4
from cpdsymp.steppers.reference import Boris, Gauss4, ImplicitEuler, ImplicitMidpoint, ReferenceFlow, boris_rotation
from cpdsymp.utils import UnsupportedOperationError
from cpdsymp.verification import convergence_study


def free_problem(eps, field=(0.3, -0.4, 1.2)):
    return problem_from_table(
        {"field": list(field), "potential_scale": 0.0, "x0": [0.1, -0.2, 0.3], "v0": [0.5, 0.7, -0.1]}, eps
    )


def unmagnetized_problem():
    return problem_from_table(
        {"field": [0.0, 0.0, 0.0], "potential_scale": 0.01, "x0": [0.3, 0.2, 0.1], "v0": [0.09, 0.05, 0.2]}, 1.0
    )


def test_boris_rotation_preserves_norm():
    rng = np.random.default_rng(5)
    for _ in range(20):
        v, t = rng.standard_normal(3), rng.standard_normal(3) * 10.0
        assert np.linalg.norm(boris_rotation(v, t)) == pytest.approx(np.linalg.norm(v), rel=1e-14)
    assert_allclose(boris_rotation(np.array([1.0, 0.0, 0.0]), np.zeros(3)), [1.0, 0.0, 0.0])


@pytest.mark.parametrize("eps", [1.0, 0.01])
def test_boris_preserves_speed_without_force(eps):
    problem = free_problem(eps)
    trajectory = integrate(Boris(), problem, 0.1, 200)
    speed = np.linalg.norm(problem.v0)
    for state in trajectory.states:
        assert np.linalg.norm(state.v) == pytest.approx(speed, rel=1e-13)


def test_boris_without_field_is_velocity_verlet():
    problem = unmagnetized_problem()
    start, h = problem.initial_state(), 0.1
    v_half = start.v + h / 2.0 * problem.force(start.x)
    x = start.x + h * v_half
    state = Boris().step(problem, start, h)
    assert_allclose(state.x, x, atol=1e-16)
    assert_allclose(state.v, v_half + h / 2.0 * problem.force(x), atol=1e-16)


def test_implicit_midpoint_applies_the_cayley_transform():
    problem = free_problem(0.1)
    start, h = problem.initial_state(), 0.25
    hm = h * problem.field_matrix(start.x)
    cayley = np.linalg.solve(np.eye(3) - hm / 2.0, np.eye(3) + hm / 2.0)
    assert_allclose(np.abs(np.linalg.eigvals(cayley)), 1.0, atol=1e-14)

    state = ImplicitMidpoint().step(problem, start, h)
    assert_allclose(state.v, cayley @ start.v, atol=1e-14)
    assert_allclose(state.x, start.x + h / 2.0 * (start.v + state.v), atol=1e-14)


def test_gauss4_tableau():
    assert Gauss4.c.sum() == pytest.approx(1.0, abs=1e-15)
    assert Gauss4.b.sum() == pytest.approx(1.0, abs=1e-15)
    assert_allclose(Gauss4.a.sum(axis=1), Gauss4.c, atol=1e-15)


def test_gauss4_conserves_free_energy():
    problem = free_problem(0.1)
    trajectory = integrate(Gauss4(), problem, 0.1, 100)
    start = problem.energy(problem.initial_state())
    assert np.max(np.abs(trajectory.energies - start)) <= 1e-12


def test_implicit_euler_dissipates_speed():
    problem = free_problem(0.1)
    trajectory = integrate(ImplicitEuler(), problem, 0.1, 20)
    speeds = [np.linalg.norm(state.v) for state in trajectory.states]
    assert all(later < earlier for earlier, later in zip(speeds, speeds[1:]))


def test_implicit_euler_tends_to_identity():
    problem = make_problem("P1", 1.0)
    start = problem.initial_state()
    state = ImplicitEuler().step(problem, start, 1e-9)
    assert_allclose(state.x, start.x, atol=1e-9)
    assert_allclose(state.v, start.v, atol=1e-9)


def test_collocation_handles_general_fields():
    problem = make_problem("P2", 0.5)
    for stepper in (ImplicitEuler(), ImplicitMidpoint(), Gauss4(), Boris()):
        state = stepper.step(problem, problem.initial_state(), 0.05)
        assert np.all(np.isfinite(state.x))
        assert state.t == pytest.approx(0.05)


def test_reference_flow_is_substepped_sc2o4():
    problem = make_problem("P1", 0.1)
    start, h = problem.initial_state(), 0.5
    flow = ReferenceFlow().step(problem, start, h)
    substepped = propagate(SC2O4(), problem, h / ReferenceFlow.substeps, ReferenceFlow.substeps)
    assert_allclose(flow.x, substepped.x, atol=1e-14)
    assert_allclose(flow.v, substepped.v, atol=1e-14)
    assert flow.t == pytest.approx(h)


def test_reference_flow_shares_controls_and_rejects_general_fields():
    controls = FixedPointControls({"max_iterations": 7})
    flow = ReferenceFlow(controls)
    assert flow.controls is controls
    with pytest.raises(UnsupportedOperationError):
        flow.step(make_problem("P2", 1.0), make_problem("P2", 1.0).initial_state(), 0.1)


def test_registry_contents():
    collection = StepperCollection()
    assert {"BORIS", "EULER", "RKO2", "RKO4", "REFERENCE-FLOW"} <= set(collection.names())
    assert collection.get("RKO4").order == 4
    assert collection.get("REFERENCE-FLOW").homogeneous_only
    assert not collection.get("BORIS").homogeneous_only


@pytest.fixture(scope="module")
def p1_reports():
    problem = make_problem("P1", 1.0)
    steps = [2.0**-k for k in range(3, 8)]
    oracle = OracleConfig({"refinement": 16})
    return {method: convergence_study(method, problem, steps, 1.0, oracle) for method in ("BORIS", "RKO2", "RKO4")}


@pytest.mark.parametrize("method, low, high", [
    ("BORIS", 1.8, 2.3),
    ("RKO2", 1.8, 2.3),
    ("RKO4", 3.7, 4.3),
])
def test_reference_method_orders(p1_reports, method, low, high):
    assert low <= p1_reports[method].slope <= high


@pytest.mark.slow
def test_implicit_euler_is_first_order_on_general_field():
    steps = [2.0**-k for k in range(5, 8)]
    report = convergence_study("EULER", make_problem("P2", 0.5), steps, 1.0, OracleConfig({"method": "scipy:DOP853"}))
    assert 0.8 <= report.slope <= 1.3
