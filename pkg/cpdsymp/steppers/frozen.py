"""Adapted exponential methods for a non-homogeneous field B(x).

The field matrix is frozen once per step, either at x_n or at the midpoint
(x_n + x_{n+1})/2, and the homogeneous second-order scheme runs with the frozen
matrix. The ``-Q1`` variants discretize the stage integrals with the one-point
rule instead of Gauss-4.
"""
import logging
import typing

import numpy as np

from ..problems import CPDProblem, State
from ..stepper import FixedPointControls, Stepper, TripleJump
from ..utils import StepFailure
from .exponential import SC1O2, SC2O2, ExponentialScheme, advance, build_tableau, tableau_for

__all__ = [
    "STEPPERS",
    "FrozenFieldStep",
    "frozen_step",
    "SG1O1",
    "SG1O2",
    "SG1O4",
]

_LOGGER = logging.getLogger(__name__)

_GAUSS_SCHEME = SC1O2.scheme
_MIDPOINT_SCHEME = SC2O2.scheme


class FrozenFieldStep(typing.NamedTuple):
    matrix: np.ndarray
    state: State


def frozen_step(
    problem: CPDProblem,
    state: State,
    h: float,
    at: np.ndarray,
    scheme: ExponentialScheme,
    stepper: Stepper,
) -> FrozenFieldStep:
    matrix = problem.field_matrix(at)
    # a varying field never hits the tableau cache
    tableau = tableau_for(scheme, h * matrix) if problem.field.homogeneous else build_tableau(scheme, h * matrix)
    return FrozenFieldStep(matrix, advance(problem, state, h, tableau, stepper.controls, stepper.stats))


class SG1O1(Stepper):
    name = "SG1O1"
    order = 1
    scheme = _GAUSS_SCHEME

    def step(self, problem: CPDProblem, state: State, h: float) -> State:
        return frozen_step(problem, state, h, state.x, self.scheme, self).state


class SG1O2(Stepper):
    name = "SG1O2"
    order = 2
    scheme = _GAUSS_SCHEME

    def step(self, problem: CPDProblem, state: State, h: float) -> State:
        candidate = frozen_step(problem, state, h, state.x, self.scheme, self).state
        for iteration in range(1, self.controls.max_iterations + 1):
            midpoint = 0.5 * (state.x + candidate.x)
            update = frozen_step(problem, state, h, midpoint, self.scheme, self).state
            change = float(np.max(np.abs(update.x - candidate.x)))
            candidate = update
            if not np.all(np.isfinite(candidate.x)) or np.max(np.abs(candidate.x)) > self.controls.divergence_bound:
                raise StepFailure(f"{self.name} midpoint iteration diverged")
            if change <= self.controls.tolerance:
                _LOGGER.debug("%s midpoint converged after %d iterations", self.name, iteration)
                self.stats.record(iteration, True)
                return candidate
        self.stats.record(self.controls.max_iterations, False)
        return candidate


class SG1O4(TripleJump):
    name = "SG1O4"
    order = 4
    base_class: typing.Type[SG1O2] = SG1O2

    def __init__(self, controls: typing.Optional[FixedPointControls] = None):
        super().__init__(self.base_class(controls), self.name)


class SG1O1Q1(SG1O1):
    name = "SG1O1-Q1"
    scheme = _MIDPOINT_SCHEME


class SG1O2Q1(SG1O2):
    name = "SG1O2-Q1"
    scheme = _MIDPOINT_SCHEME


class SG1O4Q1(SG1O4):
    name = "SG1O4-Q1"
    base_class = SG1O2Q1


STEPPERS = (SG1O1, SG1O2, SG1O4, SG1O1Q1, SG1O2Q1, SG1O4Q1)
