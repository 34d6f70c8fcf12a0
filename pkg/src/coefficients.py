"""
Profile coefficients for Calabi-type metrics.

A Calabi-type profile is the quartic V(z) = A1 z^4 + A2 z^3 + eps z^2 + A3 z + A4.
On a Hirzebruch surface the Kähler class (a, b) and the index k fix the
coefficients through the boundary conditions

    V(a) = V(b) = 0,    V'(a) = k a,    V'(b) = -k b.

Closed forms are provided for the Hirzebruch family and for a general
curvature constant eps; ``solve_boundary_coefficients`` solves the same
conditions as a linear system and serves as an independent oracle.
"""

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from src.errors import ConfigurationError


def polyval(coeffs: Sequence[float], x):
    """Horner evaluation, highest degree first; works on floats and jets."""
    coeffs = list(coeffs)
    if not coeffs:
        return 0.0 * x
    result = coeffs[0] + 0.0 * x
    for c in coeffs[1:]:
        result = result * x + c
    return result


def polyder(coeffs: Sequence[float], times: int = 1) -> Tuple[float, ...]:
    """Coefficients of the derivative, highest degree first."""
    coeffs = [float(c) for c in coeffs]
    for _ in range(times):
        degree = len(coeffs) - 1
        coeffs = [c * (degree - i) for i, c in enumerate(coeffs[:-1])] or [0.0]
    return tuple(coeffs)


@dataclass(frozen=True)
class ProfileCoefficients:
    """
    Quartic profile V(z) = A1 z^4 + A2 z^3 + eps z^2 + A3 z + A4.

    Attributes:
        A1, A2, A3, A4: Free coefficients
        eps: z^2 coefficient (curvature constant of the base surface)
    """
    A1: float
    A2: float
    A3: float
    A4: float
    eps: float = 1.0

    @property
    def polynomial(self) -> Tuple[float, ...]:
        return (self.A1, self.A2, self.eps, self.A3, self.A4)

    def evaluate(self, z, derivative: int = 0):
        return polyval(polyder(self.polynomial, derivative), z)

    def dual(self) -> 'ProfileCoefficients':
        """Coefficients of z^4 V(1/z): A1 <-> A4, A2 <-> A3."""
        return ProfileCoefficients(self.A4, self.A3, self.A2, self.A1, self.eps)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.A1, self.A2, self.A3, self.A4)


def _check_interval(a: float, b: float) -> None:
    if not 0 < a < b:
        raise ConfigurationError(f"Kähler class parameters need 0 < a < b, got a={a}, b={b}")


def calabi_coefficients(a: float, b: float) -> ProfileCoefficients:
    """
    Extremal profile on the first Hirzebruch surface.

    Example:
        >>> coeffs = calabi_coefficients(1.0, 3 ** 0.5)
        >>> # A1 = -1/4, A2 = A3 = 0, A4 = -3/4
    """
    _check_interval(a, b)
    d = (b - a) * (a * a + 4 * a * b + b * b)
    return ProfileCoefficients(
        A1=-2 * a / d,
        A2=(3 * a * a - b * b) / d,
        A3=a * b * (3 * a * a - b * b) / d,
        A4=-2 * a ** 3 * b * b / d,
        eps=1.0,
    )


def boundary_coefficients(a: float, b: float, eps: float = 1.0, k: float = 1.0) -> ProfileCoefficients:
    """
    Closed-form profile with z^2 coefficient ``eps`` and boundary constant ``k``.

    With eps = 1 and integer k this is the extremal profile on the
    Hirzebruch surface F_k; at k = 1 it agrees with ``calabi_coefficients``.
    """
    _check_interval(a, b)
    if k <= 0:
        raise ConfigurationError(f"Boundary constant k must be positive, got {k}")
    d = (b - a) * (a * a + 4 * a * b + b * b)
    linear = k * (a + b) + eps * (a - b)
    quadratic = -k * (a * a + b * b) + 2 * eps * (b * b - a * a)
    return ProfileCoefficients(
        A1=-linear / d,
        A2=-quadratic / d,
        A3=-a * b * quadratic / d,
        A4=-a * a * b * b * linear / d,
        eps=eps,
    )


def hirzebruch_coefficients(a: float, b: float, k: int = 1) -> ProfileCoefficients:
    """Extremal profile on F_k (eps = 1)."""
    if int(k) != k or k < 1:
        raise ConfigurationError(f"Hirzebruch index must be a positive integer, got {k}")
    return boundary_coefficients(a, b, eps=1.0, k=float(k))


def solve_boundary_coefficients(a: float, b: float, eps: float = 1.0, k: float = 1.0) -> ProfileCoefficients:
    """Solve V(a) = V(b) = 0, V'(a) = k a, V'(b) = -k b for (A1, A2, A3, A4)."""
    _check_interval(a, b)
    matrix = np.array([
        [a ** 4, a ** 3, a, 1.0],
        [b ** 4, b ** 3, b, 1.0],
        [4 * a ** 3, 3 * a ** 2, 1.0, 0.0],
        [4 * b ** 3, 3 * b ** 2, 1.0, 0.0],
    ])
    rhs = np.array([
        -eps * a * a,
        -eps * b * b,
        k * a - 2 * eps * a,
        -k * b - 2 * eps * b,
    ])
    A1, A2, A3, A4 = np.linalg.solve(matrix, rhs)
    return ProfileCoefficients(float(A1), float(A2), float(A3), float(A4), float(eps))


def profile_flags(coefficients: ProfileCoefficients, tol: float = 1e-12) -> Dict[str, bool]:
    """
    Curvature properties read off the coefficients of a Calabi-type profile.

    Returns:
        Dict with weakly_selfdual (A3 = 0), selfdual (A3 = A4 = 0) and
        bach_flat (4 A1 A4 - A2 A3 = 0)
    """
    c = coefficients
    return {
        'weakly_selfdual': abs(c.A3) <= tol,
        'selfdual': abs(c.A3) <= tol and abs(c.A4) <= tol,
        'bach_flat': abs(4 * c.A1 * c.A4 - c.A2 * c.A3) <= tol,
    }


def kappa_lambda_cubed(coefficients: ProfileCoefficients) -> float:
    """|c| = 2 |A1|^3 |A4| for weakly selfdual profiles (A3 = 0)."""
    return 2.0 * abs(coefficients.A1) ** 3 * abs(coefficients.A4)
