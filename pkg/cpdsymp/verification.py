"""Error metrics, order fitting and the structural checks run against the steppers."""
import logging
import math
import typing

import numpy as np
from scipy.stats import linregress

from .geometry import scalar_phi
from .oracle import OracleConfig, oracle_solve
from .problems import CPDProblem, State
from .stepper import FixedPointControls, Stepper, StepperCollection, Trajectory, propagate, step_count
from .steppers.exponential import CoefficientSet
from .utils import ConfigError, DomainError, UnsupportedOperationError

__all__ = [
    "METRICS",
    "METRIC_CONVENTIONS",
    "metric_weights",
    "ErrorMetrics",
    "OrderFit",
    "fit_order",
    "ConvergenceReport",
    "measure_error",
    "convergence_study",
    "SymplecticityReport",
    "symplecticity_residual",
    "symplecticity_report",
    "ConditionResiduals",
    "condition_samples",
    "symplectic_condition_residuals",
    "EnergySeries",
    "energy_series",
    "UniformityReport",
    "uniformity_ratio",
    "eps_uniformity",
]

_LOGGER = logging.getLogger(__name__)

Weights = typing.Tuple[float, float]

# metric = ε^a err_x + ε^b err_v
METRIC_CONVENTIONS: typing.Dict[str, typing.Dict[str, Weights]] = {
    "homogeneous": {"error1": (0, 1), "error2": (0, 1), "error4": (2, 3)},
    "general-field": {"error1": (0, 1), "error2": (1, 2), "error4": (3, 4)},
}
_FIXED_WEIGHTS: typing.Dict[str, typing.Optional[Weights]] = {
    "error": (0, 0),
    "position": None,
    "velocity": None,
}
METRICS = tuple(_FIXED_WEIGHTS) + ("error1", "error2", "error4")


def metric_weights(
    metric: str,
    convention: str = "homogeneous",
    overrides: typing.Optional[typing.Mapping[str, typing.Sequence[float]]] = None,
) -> typing.Optional[Weights]:
    if metric not in METRICS:
        raise ConfigError(f"unknown metric `{metric}`, expected one of {', '.join(METRICS)}")
    if convention not in METRIC_CONVENTIONS:
        raise ConfigError(f"unknown metric convention `{convention}`")
    if overrides and metric in overrides:
        a, b = overrides[metric]
        return float(a), float(b)
    if metric in _FIXED_WEIGHTS:
        return _FIXED_WEIGHTS[metric]
    return METRIC_CONVENTIONS[convention][metric]


def _relative(difference: np.ndarray, reference: np.ndarray, what: str) -> float:
    scale = float(np.linalg.norm(reference))
    if scale == 0.0:
        raise DomainError(f"reference {what} is zero, the relative error is undefined")
    return float(np.linalg.norm(difference)) / scale


class ErrorMetrics(typing.NamedTuple):
    eps: float
    err_x: float
    err_v: float

    @classmethod
    def between(cls, state: State, reference: State, eps: float) -> "ErrorMetrics":
        return cls(
            eps,
            _relative(state.x - reference.x, reference.x, "position"),
            _relative(state.v - reference.v, reference.v, "velocity"),
        )

    @property
    def error(self) -> float:
        return self.err_x + self.err_v

    def weighted(self, weights: Weights) -> float:
        a, b = weights
        return self.eps**a * self.err_x + self.eps**b * self.err_v

    def select(
        self,
        metric: str,
        convention: str = "homogeneous",
        overrides: typing.Optional[typing.Mapping[str, typing.Sequence[float]]] = None,
    ) -> float:
        weights = metric_weights(metric, convention, overrides)
        if weights is not None:
            return self.weighted(weights)
        return self.err_x if metric == "position" else self.err_v


class OrderFit(typing.NamedTuple):
    slope: float
    intercept: float
    residual: float


def fit_order(points: typing.Sequence[typing.Tuple[float, float]]) -> OrderFit:
    """Least-squares line through (log h, log error); ``residual`` is the RMS misfit in log space."""
    if len(points) < 3:
        raise DomainError(f"an order fit needs at least 3 points, got {len(points)}")
    steps = np.array([abs(h) for h, _ in points], dtype=float)
    errors = np.array([error for _, error in points], dtype=float)
    if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        raise DomainError("errors must be positive and finite for an order fit")
    if np.any(steps <= 0):
        raise DomainError("step sizes must be non-zero")
    if np.unique(steps).size != steps.size:
        raise DomainError("duplicate step sizes in the order fit")

    log_h, log_e = np.log(steps), np.log(errors)
    fit = linregress(log_h, log_e)
    misfit = log_e - (fit.intercept + fit.slope * log_h)
    return OrderFit(float(fit.slope), float(fit.intercept), float(np.sqrt(np.mean(misfit**2))))


class ConvergenceReport:
    def __init__(
        self,
        method: str,
        eps: float,
        metric: str = "error",
        convention: str = "homogeneous",
        overrides: typing.Optional[typing.Mapping[str, typing.Sequence[float]]] = None,
    ):
        self.method = method
        self.eps = eps
        self.metric = metric
        self.convention = convention
        self.overrides = overrides
        self.points: typing.List[typing.Tuple[float, ErrorMetrics]] = []

    def add(self, h: float, metrics: ErrorMetrics):
        self.points.append((h, metrics))
        self.points.sort(key=lambda point: -point[0])

    def values(self, metric: typing.Optional[str] = None) -> typing.List[typing.Tuple[float, float]]:
        metric = metric or self.metric
        return [(h, metrics.select(metric, self.convention, self.overrides)) for h, metrics in self.points]

    def fit(self, metric: typing.Optional[str] = None) -> OrderFit:
        return fit_order(self.values(metric))

    @property
    def slope(self) -> float:
        return self.fit().slope


def measure_error(
    stepper: Stepper, problem: CPDProblem, h: float, t_end: float, reference: State
) -> ErrorMetrics:
    final = propagate(stepper, problem, h, step_count(t_end, h))
    return ErrorMetrics.between(final, reference, problem.eps)


def convergence_study(
    method: str,
    problem: CPDProblem,
    steps: typing.Sequence[float],
    t_end: float = 1.0,
    oracle: typing.Optional[OracleConfig] = None,
    controls: typing.Optional[FixedPointControls] = None,
    metric: str = "error",
) -> ConvergenceReport:
    collection = StepperCollection()
    reference = oracle_solve(problem, t_end, min(steps), oracle, collection, controls).state
    report = ConvergenceReport(method, problem.eps, metric)
    for h in steps:
        report.add(h, measure_error(collection.get(method, controls), problem, h, t_end, reference))
    return report


_OMEGA = np.block([[np.zeros((3, 3)), np.eye(3)], [-np.eye(3), np.zeros((3, 3))]])


def _canonical_map(stepper: Stepper, problem: CPDProblem, t: float, h: float):
    def step(z: np.ndarray) -> np.ndarray:
        x, p = z[:3], z[3:]
        new = stepper.step(problem, State(t, x, problem.velocity(x, p)), h)
        return np.concatenate((new.x, problem.momentum(new.x, new.v)))

    return step


def symplecticity_residual(
    stepper: Stepper, problem: CPDProblem, state: State, h: float, delta: typing.Optional[float] = None
) -> float:
    """max |JᵀΩJ - Ω| for the central-difference Jacobian J of one step in (x, p) coordinates."""
    if not problem.has_momentum():
        raise UnsupportedOperationError(f"{problem.name} has no conjugate momentum to test symplecticity in")
    z = np.concatenate((state.x, problem.momentum(state.x, state.v)))
    if delta is None:
        delta = 1e-6 * max(1.0, float(np.linalg.norm(z)))
    step = _canonical_map(stepper, problem, state.t, h)

    jacobian = np.empty((6, 6))
    for column in range(6):
        shift = np.zeros(6)
        shift[column] = delta
        jacobian[:, column] = (step(z + shift) - step(z - shift)) / (2.0 * delta)
    return float(np.max(np.abs(jacobian.T @ _OMEGA @ jacobian - _OMEGA)))


class SymplecticityReport(typing.NamedTuple):
    method: str
    h: float
    eps: float
    delta: typing.Optional[float]
    residuals: typing.List[float]
    samples: typing.List[State]

    @property
    def max_residual(self) -> float:
        return max(self.residuals)


def symplecticity_report(
    stepper: Stepper,
    problem: CPDProblem,
    h: float,
    samples: int = 4,
    seed: int = 0,
    delta: typing.Optional[float] = None,
) -> SymplecticityReport:
    """Residuals at the initial state and at ``samples - 1`` randomly perturbed states around it."""
    rng = np.random.default_rng(seed)
    start = problem.initial_state()
    states = [start]
    for _ in range(samples - 1):
        states.append(State(0.0, start.x + 0.1 * rng.standard_normal(3), start.v + 0.1 * rng.standard_normal(3)))
    residuals = [symplecticity_residual(stepper, problem, state, h, delta) for state in states]
    _LOGGER.debug("%s symplecticity residuals at h=%g: %s", stepper.name, h, residuals)
    return SymplecticityReport(stepper.name, h, problem.eps, delta, residuals, states)


class ConditionResiduals(typing.NamedTuple):
    coefficients: str
    condition_i: float
    condition_ii: float
    condition_iii: float
    d: np.ndarray

    @property
    def worst(self) -> float:
        return max(self.condition_i, self.condition_ii, self.condition_iii)


def condition_samples(count: int = 100, seed: int = 0) -> np.ndarray:
    """Rows (θ, τ, σ) with θ log-uniform on [1e-3, 50] and τ, σ uniform on [0, 1]."""
    rng = np.random.default_rng(seed)
    theta = 10.0 ** rng.uniform(-3.0, math.log10(50.0), count)
    return np.column_stack((theta, rng.uniform(0.0, 1.0, count), rng.uniform(0.0, 1.0, count)))


def symplectic_condition_residuals(coefficients: CoefficientSet, samples: np.ndarray) -> ConditionResiduals:
    theta, tau, sigma = samples[:, 0], samples[:, 1], samples[:, 2]
    w = 1j * theta

    beta_t = coefficients.beta_scalar(tau, theta)
    gamma_t = coefficients.gamma_scalar(tau, theta)
    beta_s = coefficients.beta_scalar(sigma, theta)
    gamma_s = coefficients.gamma_scalar(sigma, theta)
    alpha_ts = coefficients.alpha_scalar(tau, sigma, theta)
    alpha_st = coefficients.alpha_scalar(sigma, tau, theta)

    d = gamma_t - w * beta_t
    condition_i = np.abs(d - 1.0)

    phi1 = np.conj(scalar_phi(1, theta))
    phi1_tau = np.conj(scalar_phi(1, tau * theta))
    condition_ii = np.abs(
        gamma_t * (phi1 - tau * phi1_tau) - beta_t * (np.exp(-w) + w * phi1 - tau * w * phi1_tau)
    )

    lhs = np.conj(beta_s) * gamma_t - w * np.conj(beta_s) * beta_t / 2.0 - np.conj(alpha_ts) * (gamma_t - w * beta_t)
    rhs = beta_t * np.conj(gamma_s) + w * beta_t * np.conj(beta_s) / 2.0 - alpha_st * (
        np.conj(gamma_s) + w * np.conj(beta_s)
    )
    condition_iii = np.abs(lhs - rhs)

    return ConditionResiduals(
        coefficients.name,
        float(np.max(condition_i)),
        float(np.max(condition_ii)),
        float(np.max(condition_iii)),
        d,
    )


class EnergySeries(typing.NamedTuple):
    times: np.ndarray
    errors: np.ndarray

    @property
    def max_error(self) -> float:
        return float(np.max(self.errors))

    def halves(self) -> typing.Tuple[float, float]:
        middle = self.times[0] + (self.times[-1] - self.times[0]) / 2.0
        first = self.errors[self.times <= middle]
        second = self.errors[self.times > middle]
        return float(np.max(first)), float(np.max(second)) if second.size else 0.0

    @property
    def drift_ratio(self) -> float:
        """Second-half maximum over first-half maximum; at most 2 counts as drift-free."""
        first, second = self.halves()
        if first == 0.0:
            return 1.0 if second == 0.0 else math.inf
        return second / first


def energy_series(trajectory: Trajectory) -> EnergySeries:
    energies = trajectory.energies
    initial = energies[0]
    if initial == 0.0:
        raise DomainError("initial energy is zero, the relative energy error is undefined")
    return EnergySeries(trajectory.times, np.abs(energies - initial) / abs(initial))


class UniformityReport(typing.NamedTuple):
    method: str
    h: float
    metric: str
    table: typing.List[typing.Tuple[float, ErrorMetrics, float]]

    @property
    def ratio(self) -> float:
        return uniformity_ratio([value for _, _, value in self.table])


def uniformity_ratio(values: typing.Sequence[float]) -> float:
    if not values:
        raise DomainError("no values to compare")
    smallest = min(values)
    if smallest <= 0.0:
        raise DomainError("uniformity ratio needs positive errors")
    return max(values) / smallest


def eps_uniformity(
    method: str,
    problem_factory: typing.Callable[[float], CPDProblem],
    h: float,
    eps_values: typing.Sequence[float],
    metric: str = "position",
    t_end: float = 1.0,
    oracle: typing.Optional[OracleConfig] = None,
    controls: typing.Optional[FixedPointControls] = None,
) -> UniformityReport:
    if not eps_values:
        raise ConfigError("eps list is empty")
    if h > min(eps_values):
        raise ConfigError(f"step {h!r} exceeds the smallest eps {min(eps_values)!r}")
    collection = StepperCollection()
    table = []
    for eps in eps_values:
        problem = problem_factory(eps)
        reference = oracle_solve(problem, t_end, h, oracle, collection, controls).state
        metrics = measure_error(collection.get(method, controls), problem, h, t_end, reference)
        table.append((eps, metrics, metrics.select(metric)))
    return UniformityReport(method, h, metric, table)
