import abc
import importlib
import logging
import os.path
import pkgutil
import typing

import numpy as np

from . import steppers
from .problems import CPDProblem, State
from .utils import ConfigError, DomainError, StepFailure

__all__ = [
    "FixedPointControls",
    "IterationStats",
    "picard",
    "Stepper",
    "StepperCollection",
    "Substeps",
    "TRIPLE_JUMP",
    "TripleJump",
    "Trajectory",
    "integrate",
    "propagate",
    "step_count",
]

_LOGGER = logging.getLogger(__name__)

_CBRT2 = 2.0 ** (1.0 / 3.0)
TRIPLE_JUMP = (1.0 / (2.0 - _CBRT2), -_CBRT2 / (2.0 - _CBRT2), 1.0 / (2.0 - _CBRT2))


class FixedPointControls:
    def __init__(self, config: typing.Optional[typing.Mapping[str, typing.Any]] = None):
        config = config or {}
        self.tolerance = float(config.get("tolerance", 1e-16))
        self.max_iterations = int(config.get("max_iterations", 5))
        self.divergence_bound = float(config.get("divergence_bound", 1e8))
        if self.tolerance <= 0:
            raise ConfigError("fixed_point.tolerance must be positive")
        if self.max_iterations < 1:
            raise ConfigError("fixed_point.max_iterations must be at least 1")
        if self.divergence_bound <= 0:
            raise ConfigError("fixed_point.divergence_bound must be positive")

    def as_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "tolerance": self.tolerance,
            "max_iterations": self.max_iterations,
            "divergence_bound": self.divergence_bound,
        }

    def __repr__(self):
        return f"FixedPointControls({self.as_dict()})"


class IterationStats:
    def __init__(self):
        self.solves = 0
        self.iterations = 0
        self.capped = 0

    def record(self, iterations: int, converged: bool):
        self.solves += 1
        self.iterations += iterations
        if not converged:
            self.capped += 1

    def as_dict(self) -> typing.Dict[str, int]:
        return {"solves": self.solves, "iterations": self.iterations, "capped": self.capped}


def picard(
    update: typing.Callable[[np.ndarray], np.ndarray],
    initial: np.ndarray,
    controls: FixedPointControls,
    stats: typing.Optional[IterationStats] = None,
) -> np.ndarray:
    """Iterate ``update`` from ``initial`` until the max-norm change drops to the tolerance."""
    current = initial
    for iteration in range(1, controls.max_iterations + 1):
        candidate = update(current)
        if not np.all(np.isfinite(candidate)) or np.max(np.abs(candidate)) > controls.divergence_bound:
            raise StepFailure(f"fixed-point iterate exceeded {controls.divergence_bound:g}")
        change = np.max(np.abs(candidate - current))
        current = candidate
        if change <= controls.tolerance:
            if stats is not None:
                stats.record(iteration, True)
            return current
    if stats is not None:
        stats.record(controls.max_iterations, False)
    return current


class Stepper(abc.ABC):
    name: str = ""
    order: int = 0
    homogeneous_only = False

    def __init__(self, controls: typing.Optional[FixedPointControls] = None):
        self.controls = controls or FixedPointControls()
        self.stats = IterationStats()

    @abc.abstractmethod
    def step(self, problem: CPDProblem, state: State, h: float) -> State:
        raise NotImplementedError

    def __repr__(self):
        return self.name


class TripleJump(Stepper):
    """Symmetric composition Φ_h = Υ_{κ1 h} ∘ Υ_{κ2 h} ∘ Υ_{κ3 h} of a second-order stepper."""

    def __init__(self, base: Stepper, name: typing.Optional[str] = None):
        super().__init__(base.controls)
        self.base = base
        self.stats = base.stats
        self.name = name or f"TJ({base.name})"
        self.order = base.order + 2
        self.homogeneous_only = base.homogeneous_only

    def step(self, problem: CPDProblem, state: State, h: float) -> State:
        start = state.t
        for kappa in TRIPLE_JUMP:
            state = self.base.step(problem, state, kappa * h)
        return State(start + h, state.x, state.v)


class Substeps(Stepper):
    """Runs ``count`` equal substeps of ``base`` per step."""

    def __init__(self, base: Stepper, count: int, name: typing.Optional[str] = None):
        if count < 1:
            raise ConfigError("substep count must be at least 1")
        super().__init__(base.controls)
        self.base = base
        self.count = count
        self.stats = base.stats
        self.name = name or f"{base.name}x{count}"
        self.order = base.order
        self.homogeneous_only = base.homogeneous_only

    def step(self, problem: CPDProblem, state: State, h: float) -> State:
        start = state.t
        for _ in range(self.count):
            state = self.base.step(problem, state, h / self.count)
        return State(start + h, state.x, state.v)


class StepperCollection:
    def __init__(self):
        self._stepper_classes: typing.Dict[str, typing.Type[Stepper]] = {}
        for _, module_name, _ in pkgutil.iter_modules([os.path.dirname(steppers.__file__)]):
            module = importlib.import_module("." + module_name, "cpdsymp.steppers")
            for stepper_class in module.STEPPERS:
                _LOGGER.debug("stepper registered: %s (%s)", stepper_class.name, module_name)
                self._stepper_classes[stepper_class.name] = stepper_class

    def names(self) -> typing.List[str]:
        return sorted(self._stepper_classes)

    def __contains__(self, name: str) -> bool:
        return name in self._stepper_classes

    def get(self, name: str, controls: typing.Optional[FixedPointControls] = None) -> Stepper:
        try:
            stepper_class = self._stepper_classes[name]
        except KeyError as error:
            raise ConfigError(f"unknown method id `{name}`, expected one of {', '.join(self.names())}") from error
        return stepper_class(controls)


class Trajectory:
    def __init__(self, problem: CPDProblem, states: typing.List[State]):
        if not states:
            raise ValueError("a trajectory holds at least the initial state")
        self.problem = problem
        self.states = states
        self._energies: typing.Optional[np.ndarray] = None

    def __len__(self):
        return len(self.states)

    def __getitem__(self, index):
        return self.states[index]

    @property
    def times(self) -> np.ndarray:
        return np.array([state.t for state in self.states])

    @property
    def final(self) -> State:
        return self.states[-1]

    @property
    def energies(self) -> np.ndarray:
        if self._energies is None:
            self._energies = np.array([self.problem.energy(state) for state in self.states])
        return self._energies


def step_count(t_end: float, h: float) -> int:
    n_steps = int(round(t_end / h))
    if n_steps < 1 or abs(n_steps * h - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ConfigError(f"step size {h!r} does not divide the horizon {t_end!r}")
    return n_steps


def _advance(stepper: Stepper, problem: CPDProblem, state: State, h: float, index: int) -> State:
    try:
        new_state = stepper.step(problem, state, h)
    except StepFailure as error:
        raise StepFailure(error.message, step_index=index) from error
    except DomainError as error:
        raise DomainError(error.message, step_index=index) from error
    # t_n = n h exactly rather than accumulated
    return State(index * h, new_state.x, new_state.v)


def integrate(stepper: Stepper, problem: CPDProblem, h: float, n_steps: int, thin: int = 1) -> Trajectory:
    if thin < 1:
        raise ConfigError("thin must be at least 1")
    state = problem.initial_state()
    states = [state]
    for index in range(1, n_steps + 1):
        state = _advance(stepper, problem, state, h, index)
        if index % thin == 0:
            states.append(state)
    return Trajectory(problem, states)


def propagate(stepper: Stepper, problem: CPDProblem, h: float, n_steps: int) -> State:
    state = problem.initial_state()
    for index in range(1, n_steps + 1):
        state = _advance(stepper, problem, state, h, index)
    return state
