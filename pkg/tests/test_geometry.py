import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad_vec
from scipy.linalg import expm

from cpdsymp.geometry import SERIES_THRESHOLD, axis, hat, phi_mat, phi_mat_scaled, scalar_phi


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_skew(rng, theta):
    direction = rng.standard_normal(3)
    return hat(theta * direction / np.linalg.norm(direction))


def test_hat_unit_axis():
    assert_allclose(hat((0.0, 0.0, 1.0)), [[0, 1, 0], [-1, 0, 0], [0, 0, 0]])
    assert_allclose(hat((0.0, 0.0, 0.0)), np.zeros((3, 3)))
    assert_allclose(hat((1.0, 2.0, 3.0)) @ np.array([1.0, 0.0, 0.0]), [0.0, -3.0, 2.0])


def test_hat_is_cross_product(rng):
    for _ in range(50):
        b, w = rng.standard_normal(3), rng.standard_normal(3)
        s = hat(b)
        assert_allclose(s @ w, np.cross(w, b), atol=1e-15)
        assert_allclose(s.T, -s)
        assert_allclose(axis(s), b)


def test_scalar_phi_values():
    assert scalar_phi(0, math.pi) == pytest.approx(-1.0, abs=1e-15)
    assert scalar_phi(1, 0.0) == pytest.approx(1.0)
    assert scalar_phi(1, math.pi) == pytest.approx(2j / math.pi, abs=1e-15)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_scalar_phi_recurrence(k):
    theta = np.array([1e-6, 1e-3, 0.3, 0.999, 1.001, 2.0, 17.0, 50.0])
    z = 1j * theta
    assert_allclose(z * scalar_phi(k + 1, theta), scalar_phi(k, theta) - 1.0 / math.factorial(k), atol=1e-14)


def test_scalar_phi_is_continuous_at_series_radius():
    below, above = scalar_phi(4, 1.0 - 1e-12), scalar_phi(4, 1.0 + 1e-12)
    assert abs(below - above) < 1e-13


def test_phi_mat_examples():
    assert_allclose(phi_mat(0, np.zeros((3, 3))), np.eye(3))
    rotated = phi_mat(0, hat((0.0, 0.0, 1.0))) @ np.array([1.0, 0.0, 0.0])
    assert_allclose(rotated, [math.cos(1.0), -math.sin(1.0), 0.0], atol=1e-15)

    s = hat((0.0, 0.0, math.pi))
    expected = np.eye(3) + 2.0 / math.pi**2 * s + s @ s / math.pi**2
    assert_allclose(phi_mat(1, s), expected, atol=1e-15)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_phi_mat_recurrence(rng, k):
    for theta in 10.0 ** rng.uniform(-8.0, math.log10(50.0), 40):
        s = random_skew(rng, theta)
        residual = s @ phi_mat(k + 1, s) - (phi_mat(k, s) - np.eye(3) / math.factorial(k))
        assert np.max(np.abs(residual)) <= 1e-12


def test_rotation_properties(rng):
    for theta in 10.0 ** rng.uniform(-8.0, math.log10(50.0), 40):
        s = random_skew(rng, theta)
        rotation = phi_mat(0, s)
        assert np.max(np.abs(rotation.T @ rotation - np.eye(3))) <= 1e-13
        assert np.linalg.det(rotation) == pytest.approx(1.0, abs=1e-13)
        assert np.max(np.abs(rotation - s @ phi_mat(1, s) - np.eye(3))) <= 1e-13


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_transpose_is_negated_argument(rng, k):
    s = random_skew(rng, 3.7)
    assert_allclose(phi_mat(k, s).T, phi_mat(k, -s), atol=1e-15)


def test_phi_mat_commutes_with_argument(rng):
    s = random_skew(rng, 7.5)
    for k in range(5):
        assert_allclose(s @ phi_mat(k, s), phi_mat(k, s) @ s, atol=1e-13)


@pytest.mark.parametrize("theta", [1e-8, 1e-5, 1e-3, 0.5, 3.0, 20.0, 50.0])
@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_closed_form_matches_defining_integral(rng, theta, k):
    s = random_skew(rng, theta)
    if k == 0:
        reference = expm(s)
    else:
        reference, _ = quad_vec(
            lambda sigma: expm((1.0 - sigma) * s) * sigma ** (k - 1) / math.factorial(k - 1),
            0.0,
            1.0,
            epsabs=1e-14,
            epsrel=1e-14,
            limit=2000,
        )
    assert_allclose(phi_mat(k, s), reference, atol=1e-10)


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_continuity_across_series_threshold(rng, k):
    direction = rng.standard_normal(3)
    unit = hat(direction / np.linalg.norm(direction))
    below = phi_mat(k, SERIES_THRESHOLD * (1.0 - 1e-9) * unit)
    above = phi_mat(k, SERIES_THRESHOLD * (1.0 + 1e-9) * unit)
    assert np.max(np.abs(below - above)) <= 1e-12


def test_scaled_stack_matches_individual_calls(rng):
    s = random_skew(rng, 2.0)
    scales = np.array([1.0, 0.5, -0.25, 0.0, 1e-7])
    stacked = phi_mat_scaled(1, s, scales)
    assert stacked.shape == (5, 3, 3)
    for scale, value in zip(scales, stacked):
        assert_allclose(value, phi_mat(1, scale * s), atol=1e-15)


def test_index_out_of_range():
    with pytest.raises(ValueError):
        phi_mat(5, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        scalar_phi(-1, 0.5)
