import logging
import typing

import numpy as np
from scipy.integrate import solve_ivp

from .problems import CPDProblem, State
from .stepper import FixedPointControls, StepperCollection, propagate, step_count
from .utils import ConfigError, OracleError

__all__ = [
    "OracleConfig",
    "OracleSolution",
    "oracle_solve",
    "SCIPY_PREFIX",
]

_LOGGER = logging.getLogger(__name__)

SCIPY_PREFIX = "scipy:"
_SCIPY_METHODS = ("DOP853", "RK45", "Radau")
# solve_ivp raises rtol below this to it
_SCIPY_RTOL_FLOOR = 100 * np.finfo(float).eps


class OracleConfig:
    def __init__(self, config: typing.Optional[typing.Mapping[str, typing.Any]] = None):
        config = config or {}
        method = config.get("method")
        self.method: typing.Optional[str] = str(method) if method is not None else None
        self.refinement = int(config.get("refinement", 128))
        self.tolerance = float(config.get("tolerance", 1e-10))

        if self.refinement < 2:
            raise ConfigError("oracle.refinement must be at least 2")
        if self.tolerance <= 0:
            raise ConfigError("oracle.tolerance must be positive")
        if self.is_scipy and self.method[len(SCIPY_PREFIX):] not in _SCIPY_METHODS:
            raise ConfigError(f"unknown oracle backend `{self.method}`, scipy supports {', '.join(_SCIPY_METHODS)}")

    @property
    def is_scipy(self) -> bool:
        return self.method is not None and self.method.startswith(SCIPY_PREFIX)

    def method_for(self, problem: CPDProblem) -> str:
        if self.method is not None:
            return self.method
        return "SC2O4" if problem.field.homogeneous else "SG1O4"

    def as_dict(self) -> typing.Dict[str, typing.Any]:
        config: typing.Dict[str, typing.Any] = {"refinement": self.refinement, "tolerance": self.tolerance}
        if self.method is not None:
            config["method"] = self.method
        return config


class OracleSolution(typing.NamedTuple):
    state: State
    method: str
    h_ref: typing.Optional[float]
    deviation: float
    passed: bool

    def as_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "method": self.method,
            "h_ref": self.h_ref if self.h_ref is not None else "adaptive",
            "deviation": self.deviation,
            "passed": self.passed,
        }


def _deviation(first: State, second: State) -> float:
    return float(max(np.max(np.abs(first.x - second.x)), np.max(np.abs(first.v - second.v))))


def _lorentz_rhs(problem: CPDProblem):
    def rhs(_t, y):
        x, v = y[:3], y[3:]
        return np.concatenate((v, np.cross(v, problem.scaled_field(x)) + problem.force(x)))

    return rhs


def _scipy_state(problem: CPDProblem, t_end: float, method: str, rtol: float) -> State:
    start = problem.initial_state()
    solution = solve_ivp(
        _lorentz_rhs(problem),
        (0.0, t_end),
        np.concatenate((start.x, start.v)),
        method=method,
        rtol=rtol,
        atol=rtol,
    )
    if not solution.success:
        raise OracleError(f"{SCIPY_PREFIX}{method} failed: {solution.message}")
    y = solution.y[:, -1]
    return State(t_end, y[:3], y[3:])


def _scipy_solve(problem: CPDProblem, t_end: float, cfg: OracleConfig) -> typing.Tuple[State, State]:
    method = cfg.method[len(SCIPY_PREFIX):]
    rtol = max(cfg.tolerance * 1e-3, _SCIPY_RTOL_FLOOR)
    return (
        _scipy_state(problem, t_end, method, rtol),
        _scipy_state(problem, t_end, method, max(rtol / 10.0, _SCIPY_RTOL_FLOOR)),
    )


def oracle_solve(
    problem: CPDProblem,
    t_end: float,
    h_min: float,
    cfg: typing.Optional[OracleConfig] = None,
    collection: typing.Optional[StepperCollection] = None,
    controls: typing.Optional[FixedPointControls] = None,
) -> OracleSolution:
    """Reference state at ``t_end`` from a fine-step run, checked against a run at half that step.

    Raises OracleError when the two runs disagree by more than the configured tolerance.
    """
    cfg = cfg or OracleConfig()
    if t_end <= 0:
        raise ConfigError("oracle horizon must be positive")
    method = cfg.method_for(problem)

    h_ref: typing.Optional[float]
    if cfg.is_scipy:
        h_ref = None
        coarse, fine = _scipy_solve(problem, t_end, cfg)
    else:
        stepper = (collection or StepperCollection()).get(method, controls)
        h_ref = h_min / cfg.refinement
        n_steps = step_count(t_end, h_ref)
        _LOGGER.info("oracle %s on %r: %d steps of %g", method, problem, n_steps, h_ref)
        coarse = propagate(stepper, problem, h_ref, n_steps)
        fine = propagate(stepper, problem, h_ref / 2.0, 2 * n_steps)

    deviation = _deviation(coarse, fine)
    solution = OracleSolution(fine, method, h_ref, deviation, deviation <= cfg.tolerance)
    if not solution.passed:
        raise OracleError(
            f"oracle {method} on {problem!r} is not self-consistent: "
            f"refined runs differ by {deviation:.3e} > {cfg.tolerance:.1e}"
        )
    _LOGGER.info("oracle %s on %r self-check passed (deviation %.3e)", method, problem, deviation)
    return solution
