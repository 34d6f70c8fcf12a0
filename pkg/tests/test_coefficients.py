"""
Tests for Calabi-type profile coefficients.

Run with: pytest tests/test_coefficients.py -v
"""

import math

import pytest

from src.coefficients import (
    ProfileCoefficients,
    boundary_coefficients,
    calabi_coefficients,
    hirzebruch_coefficients,
    kappa_lambda_cubed,
    polyder,
    polyval,
    profile_flags,
    solve_boundary_coefficients,
)
from src.errors import ConfigurationError

SQRT3 = math.sqrt(3.0)


# ==================== Polynomial Tests ====================

def test_polyval_horner():
    """Test 2x^2 - 3x + 1 at x = 2."""
    assert polyval((2.0, -3.0, 1.0), 2.0) == pytest.approx(3.0)


def test_polyder():
    """Test first and second derivatives of x^4 + x^2."""
    assert polyder((1.0, 0.0, 1.0, 0.0, 0.0)) == (4.0, 0.0, 2.0, 0.0)
    assert polyder((1.0, 0.0, 1.0, 0.0, 0.0), 2) == (12.0, 0.0, 2.0)


def test_profile_evaluate_and_dual():
    """Test V(z) and z^4 V(1/z) for V = z^4 + z^2 - 1."""
    profile = ProfileCoefficients(1.0, 0.0, 0.0, -1.0)

    assert profile.evaluate(2.0) == pytest.approx(19.0)
    assert profile.evaluate(2.0, 1) == pytest.approx(36.0)

    dual = profile.dual()
    assert dual.as_tuple() == (-1.0, 0.0, 0.0, 1.0)
    assert dual.evaluate(0.5) == pytest.approx(0.5 ** 4 * profile.evaluate(2.0))


# ==================== Closed Form Tests ====================

def test_calabi_coefficients_at_sqrt3():
    """Test a = 1, b = sqrt(3): (-1/4, 0, 0, -3/4)."""
    coeffs = calabi_coefficients(1.0, SQRT3)

    assert coeffs.A1 == pytest.approx(-0.25)
    assert coeffs.A2 == pytest.approx(0.0, abs=1e-14)
    assert coeffs.A3 == pytest.approx(0.0, abs=1e-14)
    assert coeffs.A4 == pytest.approx(-0.75)


def test_calabi_coefficients_a1_b2():
    """Test a = 1, b = 2: d = 13, A = (-2/13, -1/13, -2/13, -8/13)."""
    coeffs = calabi_coefficients(1.0, 2.0)

    assert coeffs.A1 == pytest.approx(-2 / 13)
    assert coeffs.A2 == pytest.approx(-1 / 13)
    assert coeffs.A3 == pytest.approx(-2 / 13)
    assert coeffs.A4 == pytest.approx(-8 / 13)


def test_boundary_conditions_hold():
    """Test V(a) = V(b) = 0, V'(a) = k a, V'(b) = -k b for several classes."""
    for a, b, k in [(1.0, 2.0, 1), (0.5, 3.0, 2), (1.0, 1.2, 3)]:
        coeffs = hirzebruch_coefficients(a, b, k)

        # Test 1: Zeros at the ends of the momentum interval
        assert coeffs.evaluate(a) == pytest.approx(0.0, abs=1e-12)
        assert coeffs.evaluate(b) == pytest.approx(0.0, abs=1e-12)

        # Test 2: Boundary slopes
        assert coeffs.evaluate(a, 1) == pytest.approx(k * a)
        assert coeffs.evaluate(b, 1) == pytest.approx(-k * b)


def test_k1_matches_calabi():
    """Test that the F_1 boundary profile is the Calabi profile."""
    for a, b in [(1.0, 2.0), (0.3, 0.9), (1.0, SQRT3)]:
        assert hirzebruch_coefficients(a, b, 1).as_tuple() == pytest.approx(calabi_coefficients(a, b).as_tuple())


def test_k2_leading_coefficient():
    """Test A1 = -(3a + b)/d on F_2."""
    a, b = 1.0, 2.5
    d = (b - a) * (a * a + 4 * a * b + b * b)
    assert hirzebruch_coefficients(a, b, 2).A1 == pytest.approx(-(3 * a + b) / d)


@pytest.mark.parametrize("a,b,eps,k", [
    (1.0, 2.0, 1.0, 1.0),
    (0.4, 1.7, -1.0, 2.0),
    (1.0, 3.0, 0.0, 1.5),
    (2.0, 2.5, 0.5, 3.0),
])
def test_closed_form_matches_linear_solve(a, b, eps, k):
    """Test the closed form against the linear-system oracle."""
    closed = boundary_coefficients(a, b, eps=eps, k=k)
    solved = solve_boundary_coefficients(a, b, eps=eps, k=k)
    assert closed.as_tuple() == pytest.approx(solved.as_tuple(), rel=1e-10, abs=1e-12)


# ==================== Validation Tests ====================

def test_interval_validation():
    """Test that a >= b and a <= 0 are configuration errors."""
    with pytest.raises(ConfigurationError, match="0 < a < b"):
        calabi_coefficients(2.0, 1.0)
    with pytest.raises(ConfigurationError, match="0 < a < b"):
        hirzebruch_coefficients(0.0, 1.0)
    with pytest.raises(ConfigurationError, match="0 < a < b"):
        solve_boundary_coefficients(1.0, 1.0)


def test_hirzebruch_index_validation():
    """Test that k must be a positive integer."""
    with pytest.raises(ConfigurationError, match="positive integer"):
        hirzebruch_coefficients(1.0, 2.0, 0)
    with pytest.raises(ConfigurationError, match="positive integer"):
        hirzebruch_coefficients(1.0, 2.0, 1.5)


def test_boundary_constant_validation():
    """Test that the boundary constant must be positive."""
    with pytest.raises(ConfigurationError, match="must be positive"):
        boundary_coefficients(1.0, 2.0, k=-1.0)


# ==================== Flags Tests ====================

def test_flags_compact_class():
    """Test the flags of (-1/4, 0, 0, -3/4): weakly selfdual, not selfdual, not Bach-flat."""
    flags = profile_flags(ProfileCoefficients(-0.25, 0.0, 0.0, -0.75))
    assert flags == {'weakly_selfdual': True, 'selfdual': False, 'bach_flat': False}


def test_flags_selfdual_profile():
    """Test that A3 = A4 = 0 is selfdual and Bach-flat."""
    flags = profile_flags(ProfileCoefficients(1.0, 2.0, 0.0, 0.0))
    assert flags == {'weakly_selfdual': True, 'selfdual': True, 'bach_flat': True}


def test_flags_bach_flat_with_a3():
    """Test 4 A1 A4 = A2 A3 with A3 != 0."""
    flags = profile_flags(ProfileCoefficients(1.0, 2.0, 1.0, 0.5))
    assert flags == {'weakly_selfdual': False, 'selfdual': False, 'bach_flat': True}


def test_kappa_lambda_cubed():
    """Test |c| = 2 |A1|^3 |A4| = 3/128 for the compact class."""
    assert kappa_lambda_cubed(ProfileCoefficients(-0.25, 0.0, 0.0, -0.75)) == pytest.approx(3 / 128)
