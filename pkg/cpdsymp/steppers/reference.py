"""Comparison methods: the Boris pusher and Gauss/Radau collocation on the first-order system.

The collocation methods treat ẋ = v, v̇ = M(x) v + F(x) with M(x) = hat(B(x))/ε.
Each fixed-point sweep freezes M and F at the current stage positions and
solves the stage velocities exactly from the resulting linear system, so the
gyration term never limits the contraction of the iteration.
"""
import math
import typing

import numpy as np

from ..problems import CPDProblem, State
from ..stepper import FixedPointControls, Stepper, Substeps, picard
from .exponential import SC2O4

__all__ = [
    "STEPPERS",
    "Boris",
    "CollocationStepper",
    "ImplicitEuler",
    "ImplicitMidpoint",
    "Gauss4",
    "ReferenceFlow",
]


def boris_rotation(v_minus: np.ndarray, t: np.ndarray) -> np.ndarray:
    s = 2.0 * t / (1.0 + t @ t)
    v_prime = v_minus + np.cross(v_minus, t)
    return v_minus + np.cross(v_prime, s)


class Boris(Stepper):
    """Boris pusher in its velocity-synchronized one-step form.

    Internally the leapfrog velocities v_{n+1/2}, v_{n+3/2} are formed and the
    returned velocity is their mean, so positions coincide with the staggered
    leapfrog scheme started from v_{1/2} = v_0 + h/2 (v_0 × B(x_0)/ε + F(x_0)).
    """

    name = "BORIS"
    order = 2

    def step(self, problem: CPDProblem, state: State, h: float) -> State:
        half = 0.5 * h
        v_half = state.v + half * (np.cross(state.v, problem.scaled_field(state.x)) + problem.force(state.x))
        x = state.x + h * v_half

        kick = half * problem.force(x)
        v_plus = boris_rotation(v_half + kick, half * problem.scaled_field(x))
        v_next_half = v_plus + kick
        return State(state.t + h, x, 0.5 * (v_half + v_next_half))


class CollocationStepper(Stepper):
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def step(self, problem: CPDProblem, state: State, h: float) -> State:
        count = self.b.size
        linear = {}

        def update(positions: np.ndarray) -> np.ndarray:
            matrices = [problem.field_matrix(position) for position in positions]
            forces = np.array([problem.force(position) for position in positions])
            system = np.eye(3 * count) - h * np.block(
                [[self.a[i, j] * matrices[j] for j in range(count)] for i in range(count)]
            )
            rhs = np.tile(state.v, count) + h * (self.a @ forces).ravel()
            velocities = np.linalg.solve(system, rhs).reshape(count, 3)
            linear.update(matrices=matrices, forces=forces, velocities=velocities)
            return state.x + h * self.a @ velocities

        picard(update, state.x + h * self.c[:, None] * state.v, self.controls, self.stats)

        velocities = linear["velocities"]
        accelerations = np.array([
            matrix @ velocity + force
            for matrix, velocity, force in zip(linear["matrices"], velocities, linear["forces"])
        ])
        return State(state.t + h, state.x + h * self.b @ velocities, state.v + h * self.b @ accelerations)


class ImplicitEuler(CollocationStepper):
    name = "EULER"
    order = 1
    a = np.array([[1.0]])
    b = np.array([1.0])
    c = np.array([1.0])


class ImplicitMidpoint(CollocationStepper):
    name = "RKO2"
    order = 2
    a = np.array([[0.5]])
    b = np.array([1.0])
    c = np.array([0.5])


_ROOT3_6 = math.sqrt(3.0) / 6.0


class Gauss4(CollocationStepper):
    name = "RKO4"
    order = 4
    a = np.array([
        [0.25, 0.25 - _ROOT3_6],
        [0.25 + _ROOT3_6, 0.25],
    ])
    b = np.array([0.5, 0.5])
    c = np.array([0.5 - _ROOT3_6, 0.5 + _ROOT3_6])


class ReferenceFlow(Stepper):
    """SC2O4 on 64 substeps per step; stands in for the exact flow as a resolution control."""

    name = "REFERENCE-FLOW"
    order = 4
    homogeneous_only = True
    substeps = 64

    def __init__(self, controls: typing.Optional[FixedPointControls] = None):
        super().__init__(controls)
        self._flow = Substeps(SC2O4(self.controls), self.substeps, self.name)
        self.stats = self._flow.stats

    def step(self, problem: CPDProblem, state: State, h: float) -> State:
        return self._flow.step(problem, state, h)


STEPPERS: typing.Tuple[typing.Type[Stepper], ...] = (Boris, ImplicitEuler, ImplicitMidpoint, Gauss4, ReferenceFlow)
