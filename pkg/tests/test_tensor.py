"""
Tests for pointwise multilinear algebra on 2-forms.

Run with: pytest tests/test_tensor.py -v
"""

import numpy as np
import pytest

from src import jets
from src.errors import PreconditionError, SignatureError
from src.tensor import (
    ComplexStructureField,
    Metric4,
    TwoForm,
    asd_eigendata,
    bundle_basis,
    eigenform_residual,
    exterior_derivative,
    four_form_ratio,
    hodge_star,
    inner,
    pfaffian,
    sd_asd_split,
    tensor_norm,
    wedge_one_two,
)


def basis_form(a, b):
    form = np.zeros((4, 4))
    form[a, b], form[b, a] = 1.0, -1.0
    return form


@pytest.fixture
def space():
    return jets.get_space(2)


@pytest.fixture
def euclidean(space):
    """Flat metric with the coordinate orientation."""
    return Metric4.from_components(jets.constant(np.eye(4), space))


@pytest.fixture
def kahler_form(space):
    return jets.constant(basis_form(0, 1) + basis_form(2, 3), space)


# ==================== Metric Tests ====================

def test_metric_rejects_indefinite(space):
    """Test that a Lorentzian signature is refused."""
    g = jets.constant(np.diag([1.0, 1.0, 1.0, -1.0]), space)
    with pytest.raises(SignatureError, match="positive definite"):
        Metric4.from_components(g)


def test_metric_rejects_non_symmetric(space):
    """Test that non-symmetric components are refused."""
    values = np.eye(4)
    values[0, 1] = 0.5
    with pytest.raises(SignatureError, match="symmetric"):
        Metric4.from_components(jets.constant(values, space))


def test_metric_rejects_wrong_shape(space):
    """Test that a 3x3 matrix is not a 4-metric."""
    with pytest.raises(SignatureError, match="shape"):
        Metric4.from_components(jets.constant(np.eye(3), space))


def test_volume_from_kahler_form(space, kahler_form):
    """Test that the orientation follows Pf(omega)."""
    g = jets.constant(np.diag([4.0, 4.0, 1.0, 1.0]), space)
    omega = jets.constant(4.0 * basis_form(0, 1) + basis_form(2, 3), space)
    metric = Metric4.from_components(g, omega=omega)
    assert float(metric.volume.value) == pytest.approx(4.0)


# ==================== 2-Form Tests ====================

def test_two_form_rejects_symmetric(space):
    """Test that a symmetric matrix is not a 2-form."""
    with pytest.raises(PreconditionError, match="antisymmetric"):
        TwoForm(jets.constant(np.eye(4), space))


def test_two_form_rejects_wrong_shape(space):
    """Test that a 3x3 antisymmetric matrix is not a 2-form on a 4-manifold."""
    with pytest.raises(PreconditionError, match="shape"):
        TwoForm(jets.constant(np.zeros((3, 3)), space))


def test_hodge_star_on_basis(euclidean, space):
    """Test *(e1 ^ e2) = e3 ^ e4 and *(e1 ^ e3) = -e2 ^ e4."""
    star12 = np.asarray(hodge_star(euclidean, jets.constant(basis_form(0, 1), space)).value)
    star13 = np.asarray(hodge_star(euclidean, jets.constant(basis_form(0, 2), space)).value)

    assert np.allclose(star12, basis_form(2, 3))
    assert np.allclose(star13, -basis_form(1, 3))


def test_hodge_star_is_an_involution(euclidean, space):
    """Test ** = 1 on 2-forms and the orientation flip."""
    rng = np.random.default_rng(3)
    raw = rng.normal(size=(4, 4))
    form = jets.constant(raw - raw.T, space)

    twice = hodge_star(euclidean, hodge_star(euclidean, form))
    flipped = hodge_star(euclidean, form, orientation=-1)

    assert np.allclose(twice.value, form.value)
    assert np.allclose(flipped.value, -np.asarray(hodge_star(euclidean, form).value))


def test_sd_asd_split(euclidean, space):
    """Test the split of e1 ^ e2 into selfdual and anti-selfdual halves."""
    plus, minus = sd_asd_split(euclidean, jets.constant(basis_form(0, 1), space))

    assert np.allclose(plus.value, 0.5 * (basis_form(0, 1) + basis_form(2, 3)))
    assert np.allclose(minus.value, 0.5 * (basis_form(0, 1) - basis_form(2, 3)))


def test_kahler_form_normalization(euclidean, kahler_form):
    """Test |omega|^2 = 2 and pf(omega) = 4."""
    metric = Metric4.from_components(euclidean.g, omega=kahler_form)

    assert float(inner(metric, kahler_form, kahler_form).value) == pytest.approx(2.0)
    assert float(pfaffian(kahler_form, metric).value) == pytest.approx(4.0)


def test_kahler_form_is_selfdual(euclidean, kahler_form):
    """Test that omega = e12 + e34 is selfdual for the coordinate orientation."""
    assert np.allclose(hodge_star(euclidean, kahler_form).value, kahler_form.value)


def test_asd_eigendata(euclidean, space):
    """Test lambda = 1 and omega_I = f for the unit form e12 - e34."""
    form = jets.constant(basis_form(0, 1) - basis_form(2, 3), space)
    lam, omega_i = asd_eigendata(form, euclidean)

    assert float(lam.value) == pytest.approx(1.0)
    assert np.allclose(omega_i.value, form.value)


def test_asd_eigendata_zero_form(euclidean, space):
    """Test that the vanishing form has no unit direction."""
    lam, omega_i = asd_eigendata(jets.zeros((4, 4), space), euclidean)
    assert float(lam.value) == 0.0
    assert omega_i is None


def test_asd_eigendata_rejects_selfdual(euclidean, kahler_form):
    """Test that a selfdual form is refused."""
    with pytest.raises(PreconditionError, match="anti-selfdual"):
        asd_eigendata(kahler_form, euclidean)


# ==================== Complex Structure Tests ====================

def test_complex_structure_squares_to_minus_one(euclidean, kahler_form):
    """Test J^2 = -1 for the standard Kähler form."""
    J = ComplexStructureField.from_metric_and_form(euclidean, kahler_form)
    J.check(euclidean)

    matrix = np.asarray(J.matrix.value)
    assert np.allclose(matrix @ matrix, -np.eye(4))


def test_complex_structure_check_fails(euclidean, space):
    """Test that a degenerate 2-form does not give a complex structure."""
    J = ComplexStructureField.from_metric_and_form(euclidean, jets.constant(basis_form(0, 1), space))
    with pytest.raises(PreconditionError, match="-Id"):
        J.check(euclidean)


# ==================== Exterior Calculus Tests ====================

def test_d_squared_vanishes():
    """Test d(df) = 0 and d(d alpha) = 0."""
    x = jets.coordinates((0.2, 0.4, -0.3, 1.1), 3)
    f = x[0] * x[1] + jets.sin(x[2]) * x[3]
    df = jets.gradient(f)

    assert np.allclose(exterior_derivative(df).value, 0.0, atol=1e-14)

    alpha = jets.stack([x[1] * x[2], x[0] * x[0], jets.exp(x[3]), x[0] * x[2]])
    d_alpha = exterior_derivative(alpha)
    assert np.allclose(exterior_derivative(d_alpha).value, 0.0, atol=1e-13)


def test_wedge_one_two_is_alternating():
    """Test dx0 ^ (dx1 ^ dx2) and antisymmetry of theta ^ F in every pair."""
    space = jets.get_space(1)
    theta = jets.constant(np.array([1.0, 0.0, 0.0, 0.0]), space)
    top = wedge_one_two(theta, jets.constant(basis_form(1, 2), space)).value

    assert top[0, 1, 2] == pytest.approx(1.0)
    assert top[1, 0, 2] == pytest.approx(-1.0)
    assert top[2, 1, 0] == pytest.approx(-1.0)

    x = jets.coordinates((0.5, 0.1, 0.2, 0.3), 1)
    theta = jets.stack([x[0], 1.0, 0.0, x[2]])
    form = jets.stack([[0.0, x[1], 2.0, 0.0], [-x[1], 0.0, 0.0, 1.0],
                       [-2.0, 0.0, 0.0, x[3]], [0.0, -1.0, -x[3], 0.0]])
    coeffs = wedge_one_two(theta, form).coeffs
    assert np.allclose(coeffs, -np.swapaxes(coeffs, 0, 1))
    assert np.allclose(coeffs, -np.swapaxes(coeffs, 1, 2))


def test_four_form_ratio():
    """Test (omega ^ omega) / eps = 2 for omega = dx0 ^ dx1 + dx2 ^ dx3."""
    space = jets.get_space(0)
    omega = jets.constant(basis_form(0, 1) + basis_form(2, 3), space)
    volume = jets.constant(1.0, space)

    assert float(four_form_ratio(omega, omega, volume).value) == pytest.approx(2.0)
    assert float(four_form_ratio(omega, omega, volume * 2.0).value) == pytest.approx(1.0)


def test_exterior_derivative_rejects_three_forms():
    """Test that only 1- and 2-forms are supported."""
    space = jets.get_space(2)
    with pytest.raises(PreconditionError, match="1- and 2-forms"):
        exterior_derivative(jets.zeros((4, 4, 4), space))


# ==================== Norms and Spectra Tests ====================

def test_tensor_norm_with_identity():
    """Test that the norm reduces to the Frobenius norm for the flat metric."""
    values = np.arange(16.0).reshape(4, 4)
    assert tensor_norm(values, np.eye(4)) == pytest.approx(np.linalg.norm(values))


def test_tensor_norm_scales_with_inverse():
    """Test |v| for a 1-form under g^-1 = 4 Id."""
    assert tensor_norm(np.array([1.0, 0.0, 0.0, 0.0]), 4.0 * np.eye(4)) == pytest.approx(2.0)


@pytest.mark.parametrize("side", [1, -1])
def test_bundle_basis_is_orthonormal(euclidean, side):
    """Test that the basis of Lambda+ / Lambda- is orthonormal for <a, b> = 1/2 a_ij b^ij."""
    basis = bundle_basis(np.asarray(euclidean.star.value), np.eye(4), side)
    gram = 0.5 * np.einsum('kab,lab->kl', basis, basis)

    assert basis.shape == (3, 4, 4)
    assert np.allclose(gram, np.eye(3), atol=1e-12)


def test_eigenform_residual_rejects_zero_form():
    """Test that the zero form is no eigenform."""
    with pytest.raises(PreconditionError, match="non-zero"):
        eigenform_residual(np.zeros((4, 4, 4, 4)), np.zeros((4, 4)), np.eye(4))
