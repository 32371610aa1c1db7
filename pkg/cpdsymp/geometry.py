"""Kernels for 3x3 skew-symmetric matrices.

A skew matrix is stored as a plain (3, 3) float ndarray. ``hat`` maps an axis b to
the matrix S with ``S @ w == np.cross(w, b)``; ``axis`` reads b back.

The φ-functions φ_0(z) = e^z, φ_k(z) = ∫_0^1 e^{(1-σ)z} σ^{k-1}/(k-1)! dσ are
evaluated from the spectrum {0, ±iθ}, θ = ‖b‖:

    φ_k(S) = φ_k(0) I + (φ_k(0) - Re φ_k(iθ)) N² + Im φ_k(iθ) N,   N = S/θ

with a truncated matrix Taylor series when θ is below ``SERIES_THRESHOLD``.
"""
import math
import typing

import numpy as np

__all__ = [
    "MAX_PHI_INDEX",
    "SERIES_THRESHOLD",
    "hat",
    "axis",
    "scalar_phi",
    "phi_mat",
    "phi_mat_scaled",
]

MAX_PHI_INDEX = 4
SERIES_THRESHOLD = 1e-4
_SERIES_ORDER = 8

_SCALAR_SERIES_RADIUS = 1.0
_SCALAR_SERIES_TERMS = 30

_IDENTITY = np.eye(3)


def _inverse_factorial(n: int) -> float:
    return 1.0 / math.factorial(n)


def _check_index(k: int):
    if not 0 <= k <= MAX_PHI_INDEX:
        raise ValueError(f"φ-index must be within 0..{MAX_PHI_INDEX}, got {k}")


def hat(b: typing.Sequence[float]) -> np.ndarray:
    b1, b2, b3 = np.asarray(b, dtype=float)
    return np.array([
        [0.0, b3, -b2],
        [-b3, 0.0, b1],
        [b2, -b1, 0.0],
    ])


def axis(s: np.ndarray) -> np.ndarray:
    return np.array([s[1, 2], s[2, 0], s[0, 1]])


def scalar_phi(k: int, theta):
    """φ_k(iθ) for real θ (scalar or array)."""
    _check_index(k)
    theta = np.asarray(theta, dtype=float)
    z = 1j * theta
    small = np.abs(theta) < _SCALAR_SERIES_RADIUS

    # Horner form of Σ_j z^j / (j + k)!
    z_series = np.where(small, z, 0.0)
    series = np.full(z.shape, _inverse_factorial(k + _SCALAR_SERIES_TERMS), dtype=complex)
    for j in range(_SCALAR_SERIES_TERMS - 1, -1, -1):
        series = series * z_series + _inverse_factorial(k + j)

    # upward recurrence φ_{j+1}(z) = (φ_j(z) - 1/j!) / z from φ_0 = e^z
    z_large = np.where(small, 1.0, z)
    recurrence = np.exp(z_large)
    for j in range(k):
        recurrence = (recurrence - _inverse_factorial(j)) / z_large

    value = np.where(small, series, recurrence)
    if value.ndim == 0:
        return complex(value)
    return value


def _phi_series(k: int, matrices: np.ndarray) -> np.ndarray:
    result = np.broadcast_to(_IDENTITY * _inverse_factorial(k + _SERIES_ORDER), matrices.shape).copy()
    for j in range(_SERIES_ORDER - 1, -1, -1):
        result = matrices @ result + _IDENTITY * _inverse_factorial(k + j)
    return result


def phi_mat_scaled(k: int, s: np.ndarray, scales) -> np.ndarray:
    """Stack of φ_k(c S) for every scalar c in ``scales``; shape (len(scales), 3, 3)."""
    _check_index(k)
    scales = np.atleast_1d(np.asarray(scales, dtype=float))
    theta = float(np.linalg.norm(axis(s)))
    arguments = scales * theta
    small = np.abs(arguments) < SERIES_THRESHOLD
    result = np.empty((scales.size, 3, 3))

    if not np.all(small):
        unit = s / theta
        unit_squared = unit @ unit
        values = scalar_phi(k, arguments[~small])
        origin = _inverse_factorial(k)
        result[~small] = (
            origin * _IDENTITY
            + (origin - values.real)[:, None, None] * unit_squared
            + values.imag[:, None, None] * unit
        )
    if np.any(small):
        result[small] = _phi_series(k, scales[small][:, None, None] * s)
    return result


def phi_mat(k: int, s: np.ndarray) -> np.ndarray:
    return phi_mat_scaled(k, s, 1.0)[0]
