"""Charged-particle initial-value problems ẍ = ẋ × B(x)/ε + F(x)."""
import abc
import math
import typing

import numpy as np

from .geometry import hat, phi_mat
from .utils import ConfigError, DomainError, UnsupportedOperationError

__all__ = [
    "State",
    "FieldSpec",
    "HomogeneousField",
    "GeneralField",
    "MaximalOrderingField",
    "ForceSpec",
    "AxialPotential",
    "CPDProblem",
    "PROBLEM_IDS",
    "make_problem",
    "problem_from_table",
]

SINGULAR_RADIUS = 1e-12

Vector = typing.Callable[[np.ndarray], np.ndarray]


class State(typing.NamedTuple):
    t: float
    x: np.ndarray
    v: np.ndarray


class FieldSpec(abc.ABC):
    homogeneous = False

    @abc.abstractmethod
    def scaled(self, x: np.ndarray, eps: float) -> np.ndarray:
        """Total field divided by ε at position x."""
        raise NotImplementedError


class HomogeneousField(FieldSpec):
    homogeneous = True

    def __init__(self, b: typing.Sequence[float]):
        self.b = np.asarray(b, dtype=float)

    def scaled(self, x: np.ndarray, eps: float) -> np.ndarray:
        return self.b / eps


class GeneralField(FieldSpec):
    def __init__(self, evaluator: Vector):
        self.evaluator = evaluator

    def scaled(self, x: np.ndarray, eps: float) -> np.ndarray:
        return np.asarray(self.evaluator(x), dtype=float) / eps


class MaximalOrderingField(FieldSpec):
    """B(εx)/ε plus an optional ε-independent part evaluated at x."""

    def __init__(self, evaluator: Vector, offset: typing.Optional[Vector] = None):
        self.evaluator = evaluator
        self.offset = offset

    def scaled(self, x: np.ndarray, eps: float) -> np.ndarray:
        total = np.asarray(self.evaluator(eps * x), dtype=float) / eps
        if self.offset is not None:
            total = total + self.offset(x)
        return total


class ForceSpec(abc.ABC):
    @abc.abstractmethod
    def potential(self, x: np.ndarray) -> float:
        raise NotImplementedError

    @abc.abstractmethod
    def force(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def is_zero(self) -> bool:
        return False


class AxialPotential(ForceSpec):
    """U(x) = c / r with r = sqrt(x1² + x2²); singular on the x3 axis."""

    singularity = "axis r = sqrt(x1^2 + x2^2) = 0"

    def __init__(self, scale: float):
        self.scale = float(scale)

    def _radius(self, x: np.ndarray) -> float:
        radius = math.hypot(x[0], x[1])
        if radius < SINGULAR_RADIUS and self.scale != 0.0:
            raise DomainError(f"position {x} lies on the singular {self.singularity}")
        return radius

    def potential(self, x: np.ndarray) -> float:
        if self.scale == 0.0:
            return 0.0
        return self.scale / self._radius(x)

    def force(self, x: np.ndarray) -> np.ndarray:
        if self.scale == 0.0:
            return np.zeros(3)
        radius = self._radius(x)
        return self.scale / radius**3 * np.array([x[0], x[1], 0.0])

    def is_zero(self) -> bool:
        return self.scale == 0.0


class CPDProblem:
    def __init__(
        self,
        name: str,
        eps: float,
        field: FieldSpec,
        potential: ForceSpec,
        x0: typing.Sequence[float],
        v0: typing.Sequence[float],
        vector_potential: typing.Optional[Vector] = None,
    ):
        if not 0.0 < eps <= 1.0:
            raise ConfigError(f"eps must lie in (0, 1], got {eps}")
        self.name = name
        self.eps = float(eps)
        self.field = field
        self.potential = potential
        self.x0 = np.asarray(x0, dtype=float)
        self.v0 = np.asarray(v0, dtype=float)
        self.vector_potential = vector_potential
        # rejects initial data on the singularity locus
        self.potential.potential(self.x0)

    def __repr__(self):
        return f"{self.name}(eps={self.eps!r})"

    def initial_state(self) -> State:
        return State(0.0, self.x0.copy(), self.v0.copy())

    def scaled_field(self, x: np.ndarray) -> np.ndarray:
        return self.field.scaled(x, self.eps)

    def field_matrix(self, x: np.ndarray) -> np.ndarray:
        return hat(self.field.scaled(x, self.eps))

    def force(self, x: np.ndarray) -> np.ndarray:
        return self.potential.force(x)

    def energy(self, state: State) -> float:
        return 0.5 * float(state.v @ state.v) + self.potential.potential(state.x)

    def has_momentum(self) -> bool:
        return self.vector_potential is not None

    def _require_vector_potential(self) -> Vector:
        if self.vector_potential is None:
            raise UnsupportedOperationError(f"{self.name} has no known vector potential")
        return self.vector_potential

    def momentum(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return v + self._require_vector_potential()(x) / self.eps

    def velocity(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        return p - self._require_vector_potential()(x) / self.eps

    def exact_free_solution(self, t: float) -> State:
        if not (self.field.homogeneous and self.potential.is_zero()):
            raise UnsupportedOperationError("the exact flow is only known for a free particle in a homogeneous field")
        tm = t * self.field_matrix(self.x0)
        return State(t, self.x0 + t * phi_mat(1, tm) @ self.v0, phi_mat(0, tm) @ self.v0)


class _SymmetricGauge:
    """A(x) = ½ B × x for a constant field B."""

    def __init__(self, b: typing.Sequence[float]):
        self.b = np.asarray(b, dtype=float)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return 0.5 * np.cross(self.b, x)


def _axial_field(x: np.ndarray) -> np.ndarray:
    return np.array([0.0, 0.0, math.hypot(x[0], x[1])])


def _axial_vector_potential(x: np.ndarray) -> np.ndarray:
    radius = math.hypot(x[0], x[1])
    return np.array([-x[1] * radius / 3.0, x[0] * radius / 3.0, 0.0])


def _slow_field(y: np.ndarray) -> np.ndarray:
    return np.array([math.cos(y[1]), 1.0 + math.sin(y[2]), math.cos(y[0])])


def _field_offset(x: np.ndarray) -> np.ndarray:
    return np.array([-x[0], 0.0, x[2]])


def _problem_1(eps: float) -> CPDProblem:
    b = (0.0, 0.0, 1.0)
    return CPDProblem(
        "P1",
        eps,
        HomogeneousField(b),
        AxialPotential(1.0 / 100.0),
        x0=(0.0, 0.2, 0.1),
        v0=(0.09, 0.05, 0.2),
        vector_potential=_SymmetricGauge(b),
    )


def _problem_2(eps: float) -> CPDProblem:
    return CPDProblem(
        "P2",
        eps,
        GeneralField(_axial_field),
        AxialPotential(1.0 / 100.0),
        x0=(0.0, 1.0, 0.1),
        v0=(0.09, 0.05, 0.2),
        vector_potential=_axial_vector_potential,
    )


def _problem_3(eps: float) -> CPDProblem:
    return CPDProblem(
        "P3",
        eps,
        MaximalOrderingField(_slow_field, _field_offset),
        AxialPotential(1.0),
        x0=(1.0 / 3.0, 1.0 / 4.0, 1.0 / 2.0),
        v0=(2.0 / 5.0, 2.0 / 3.0, 1.0),
    )


_PROBLEMS: typing.Dict[str, typing.Callable[[float], CPDProblem]] = {
    "P1": _problem_1,
    "P2": _problem_2,
    "P3": _problem_3,
}

PROBLEM_IDS = tuple(_PROBLEMS)


def make_problem(problem_id: str, eps: float) -> CPDProblem:
    try:
        factory = _PROBLEMS[problem_id]
    except KeyError as error:
        raise ConfigError(f"unknown problem id `{problem_id}`, expected one of {', '.join(PROBLEM_IDS)}") from error
    return factory(eps)


def problem_from_table(table: typing.Mapping[str, typing.Any], eps: float) -> CPDProblem:
    """Homogeneous field with U = c/r, as written in an inline ``[problem]`` table."""
    b = table.get("field", (0.0, 0.0, 1.0))
    return CPDProblem(
        str(table.get("name", "inline")),
        eps,
        HomogeneousField(b),
        AxialPotential(float(table.get("potential_scale", 0.0))),
        x0=table["x0"],
        v0=table["v0"],
        vector_potential=_SymmetricGauge(b),
    )
