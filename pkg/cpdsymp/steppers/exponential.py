"""Continuous-stage symplectic adapted exponential methods for a homogeneous field.

A one-step map advances (x_n, v_n) by

    X_i     = x_n + c_i h φ1(c_i hM) v_n + h² Σ_j w_ij φ1((c_i - c_j) hM) F(X_j)
    x_{n+1} = x_n + h φ1(hM) v_n + h² Σ_i b_i (1 - c_i) φ1((1 - c_i) hM) F(X_i)
    v_{n+1} = φ0(hM) v_n + h Σ_i b_i φ0((1 - c_i) hM) F(X_i)

where a quadrature (b_i, c_i) discretizes the continuous stage and the coupling
weights w_ij come from the α coefficient of the stage equation. Schemes with a
strictly lower-triangular coupling are evaluated explicitly, others by Picard
iteration started from the force-free prediction.
"""
import functools
import logging
import math
import typing

import numpy as np

from ..geometry import axis, phi_mat_scaled, scalar_phi
from ..problems import CPDProblem, State
from ..stepper import FixedPointControls, IterationStats, Stepper, picard, TRIPLE_JUMP
from ..utils import UnsupportedOperationError

__all__ = [
    "STEPPERS",
    "QuadratureRule",
    "gauss4",
    "midpoint_rule",
    "CoefficientSet",
    "SECOND_ORDER_COEFFICIENTS",
    "FOURTH_ORDER_COEFFICIENTS",
    "ExponentialScheme",
    "StageTableau",
    "build_tableau",
    "tableau_for",
    "solve_stages",
    "advance",
    "SC1O2",
    "SC2O2",
    "SC1O4",
    "SC2O4",
]

_LOGGER = logging.getLogger(__name__)


class QuadratureRule:
    def __init__(self, nodes: typing.Sequence[float], weights: typing.Sequence[float]):
        self.nodes = np.asarray(nodes, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        if self.nodes.shape != self.weights.shape:
            raise ValueError("quadrature nodes and weights differ in length")
        if not math.isclose(float(self.weights.sum()), 1.0, rel_tol=0.0, abs_tol=1e-14):
            raise ValueError("quadrature weights must sum to one")
        if np.any(self.nodes <= 0.0) or np.any(self.nodes >= 1.0):
            raise ValueError("quadrature nodes must lie strictly inside (0, 1)")


def gauss4() -> QuadratureRule:
    a = 2.0 * math.sqrt(30.0) / 35.0
    b = math.sqrt(30.0) / 36.0
    outer = math.sqrt(3.0 / 7.0 + a)
    inner = math.sqrt(3.0 / 7.0 - a)
    return QuadratureRule(
        nodes=((1.0 + outer) / 2.0, (1.0 + inner) / 2.0, (1.0 - inner) / 2.0, (1.0 - outer) / 2.0),
        weights=((0.5 - b) / 2.0, (0.5 + b) / 2.0, (0.5 + b) / 2.0, (0.5 - b) / 2.0),
    )


def midpoint_rule() -> QuadratureRule:
    return QuadratureRule(nodes=(0.5,), weights=(1.0,))


class CoefficientSet:
    """α_{τσ}(hM) = (shift + (τ - σ)/2) φ1((τ - σ) hM), β_τ = (1 - τ) φ1((1 - τ) hM), γ_τ = φ0((1 - τ) hM).

    ``beta_scale`` exists only to build deliberately broken sets for the symplectic
    condition checks.
    """

    def __init__(self, name: str, shift: float, beta_scale: float = 1.0):
        self.name = name
        self.shift = shift
        self.beta_scale = beta_scale

    def alpha_weight(self, tau, sigma):
        return self.shift + (tau - sigma) / 2.0

    def alpha(self, tau: float, sigma: float, hm: np.ndarray) -> np.ndarray:
        return self.alpha_weight(tau, sigma) * phi_mat_scaled(1, hm, tau - sigma)[0]

    def beta(self, tau, hm: np.ndarray) -> np.ndarray:
        """Stack of β_τ over the nodes in ``tau``."""
        remaining = 1.0 - np.atleast_1d(np.asarray(tau, dtype=float))
        return self.beta_scale * remaining[:, None, None] * phi_mat_scaled(1, hm, remaining)

    def gamma(self, tau, hm: np.ndarray) -> np.ndarray:
        return phi_mat_scaled(0, hm, 1.0 - np.atleast_1d(np.asarray(tau, dtype=float)))

    # the same coefficients at a purely imaginary scalar argument W = iθ
    def alpha_scalar(self, tau, sigma, theta):
        return self.alpha_weight(tau, sigma) * scalar_phi(1, (tau - sigma) * theta)

    def beta_scalar(self, tau, theta):
        return self.beta_scale * (1.0 - tau) * scalar_phi(1, (1.0 - tau) * theta)

    def gamma_scalar(self, tau, theta):
        return scalar_phi(0, (1.0 - tau) * theta)

    def __repr__(self):
        return f"CoefficientSet({self.name})"


SECOND_ORDER_COEFFICIENTS = CoefficientSet("second-order", 0.0)
FOURTH_ORDER_COEFFICIENTS = CoefficientSet("fourth-order", 1.0 / 6.0)


class ExponentialScheme:
    """Nodes, weights and scalar coupling of a scheme; the output weights come from ``coefficients``."""

    def __init__(self, name: str, nodes, weights, coupling, coefficients: typing.Optional[CoefficientSet] = None):
        self.name = name
        self.nodes = np.asarray(nodes, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.coupling = np.asarray(coupling, dtype=float)
        self.coefficients = coefficients or SECOND_ORDER_COEFFICIENTS
        self.explicit = not np.any(np.triu(self.coupling))

    @classmethod
    def continuous_stage(cls, name: str, coefficients: CoefficientSet, quadrature: QuadratureRule):
        nodes, weights = quadrature.nodes, quadrature.weights
        coupling = weights[None, :] * coefficients.alpha_weight(nodes[:, None], nodes[None, :])
        return cls(name, nodes, weights, coupling, coefficients)

    @property
    def stage_count(self) -> int:
        return self.nodes.size

    def __repr__(self):
        return f"ExponentialScheme({self.name})"


class StageTableau:
    """Every φ-matrix one step of a scheme needs, for a fixed hM."""

    def __init__(self, scheme: ExponentialScheme, hm: np.ndarray):
        c = scheme.nodes
        n = scheme.stage_count
        differences = (c[:, None] - c[None, :]).ravel()
        phi1 = phi_mat_scaled(1, hm, np.concatenate(([1.0], c, differences)))
        phi0 = phi_mat_scaled(0, hm, 1.0)

        self.scheme = scheme
        self.drift = phi1[0]
        self.rotation = phi0[0]
        self.stage_drift = c[:, None, None] * phi1[1:n + 1]
        self.position_weights = scheme.weights[:, None, None] * scheme.coefficients.beta(c, hm)
        self.velocity_weights = scheme.weights[:, None, None] * scheme.coefficients.gamma(c, hm)
        self.coupling = scheme.coupling[:, :, None, None] * phi1[n + 1:].reshape(n, n, 3, 3)


def build_tableau(scheme: ExponentialScheme, hm: np.ndarray) -> StageTableau:
    return StageTableau(scheme, hm)


@functools.lru_cache(maxsize=64)
def _cached_tableau(scheme: ExponentialScheme, hm_axis: typing.Tuple[float, float, float]) -> StageTableau:
    _LOGGER.debug("building %s tableau for hM axis %s", scheme.name, hm_axis)
    hm = np.array([
        [0.0, hm_axis[2], -hm_axis[1]],
        [-hm_axis[2], 0.0, hm_axis[0]],
        [hm_axis[1], -hm_axis[0], 0.0],
    ])
    return StageTableau(scheme, hm)


def tableau_for(scheme: ExponentialScheme, hm: np.ndarray) -> StageTableau:
    a = axis(hm)
    return _cached_tableau(scheme, (float(a[0]), float(a[1]), float(a[2])))


def _forces(problem: CPDProblem, stages: np.ndarray) -> np.ndarray:
    return np.array([problem.force(stage) for stage in stages])


def solve_stages(
    problem: CPDProblem,
    state: State,
    h: float,
    tableau: StageTableau,
    controls: FixedPointControls,
    stats: typing.Optional[IterationStats] = None,
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Stage values X_i and the forces F(X_i)."""
    prediction = state.x + h * tableau.stage_drift @ state.v
    h2 = h * h

    if tableau.scheme.explicit:
        stages = np.empty_like(prediction)
        forces = np.empty_like(prediction)
        for i in range(prediction.shape[0]):
            stages[i] = prediction[i] + h2 * np.einsum("jab,jb->a", tableau.coupling[i, :i], forces[:i])
            forces[i] = problem.force(stages[i])
        return stages, forces

    def update(stages: np.ndarray) -> np.ndarray:
        return prediction + h2 * np.einsum("ijab,jb->ia", tableau.coupling, _forces(problem, stages))

    stages = picard(update, prediction, controls, stats)
    return stages, _forces(problem, stages)


def advance(
    problem: CPDProblem,
    state: State,
    h: float,
    tableau: StageTableau,
    controls: FixedPointControls,
    stats: typing.Optional[IterationStats] = None,
) -> State:
    _, forces = solve_stages(problem, state, h, tableau, controls, stats)
    x = state.x + h * tableau.drift @ state.v + h * h * np.einsum("iab,ib->a", tableau.position_weights, forces)
    v = tableau.rotation @ state.v + h * np.einsum("iab,ib->a", tableau.velocity_weights, forces)
    return State(state.t + h, x, v)


def _sc2o4_scheme() -> ExponentialScheme:
    gamma1, gamma2, _ = TRIPLE_JUMP
    c = np.array([gamma1 / 2.0, 0.5, 1.0 - gamma1 / 2.0])
    a = np.array([
        [0.0, 0.0, 0.0],
        [gamma1, 0.0, 0.0],
        [gamma1, gamma2, 0.0],
    ])
    return ExponentialScheme("SC2O4", c, (gamma1, gamma2, gamma1), a * (c[:, None] - c[None, :]))


class ExponentialStepper(Stepper):
    homogeneous_only = True
    scheme: ExponentialScheme

    def step(self, problem: CPDProblem, state: State, h: float) -> State:
        if not problem.field.homogeneous:
            raise UnsupportedOperationError(f"{self.name} needs a homogeneous magnetic field")
        tableau = tableau_for(self.scheme, h * problem.field_matrix(state.x))
        return advance(problem, state, h, tableau, self.controls, self.stats)


class SC1O2(ExponentialStepper):
    name = "SC1O2"
    order = 2
    scheme = ExponentialScheme.continuous_stage("SC1O2", SECOND_ORDER_COEFFICIENTS, gauss4())


class SC2O2(ExponentialStepper):
    name = "SC2O2"
    order = 2
    scheme = ExponentialScheme.continuous_stage("SC2O2", SECOND_ORDER_COEFFICIENTS, midpoint_rule())


class SC1O4(ExponentialStepper):
    name = "SC1O4"
    order = 4
    scheme = ExponentialScheme.continuous_stage("SC1O4", FOURTH_ORDER_COEFFICIENTS, gauss4())


class SC2O4(ExponentialStepper):
    name = "SC2O4"
    order = 4
    scheme = _sc2o4_scheme()


STEPPERS = (SC1O2, SC2O2, SC1O4, SC2O4)
