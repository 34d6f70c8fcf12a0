"""
Pointwise multilinear algebra on a Riemannian 4-manifold.

Tensors are jets (see ``src.jets``) whose coordinate components carry exact
derivatives, or plain numpy arrays of values when no derivatives are needed.

Conventions used throughout the lab:
- 2-forms are antisymmetric (4, 4) arrays; <a, b> = 1/2 a_ij b^ij, so a
  Kähler form has |omega|^2 = 2.
- The orientation density is eps_0123 = Pf(omega) (the Pfaffian of the
  coordinate components), which makes vol = 1/2 omega ^ omega.
- (*a)_ab = 1/2 eps_abcd a^cd.
- J^c_a = g^cb omega_ab, i.e. omega(X, Y) = g(JX, Y).
- J acts on 1-forms by (J alpha)_a = -alpha_c J^c_a, so (J alpha)^# = J(alpha^#).
"""

import itertools
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from src import jets
from src.errors import PreconditionError, SignatureError
from src.jets import Jet, contract


def _levi_civita() -> np.ndarray:
    symbol = np.zeros((4, 4, 4, 4))
    for perm in itertools.permutations(range(4)):
        inversions = sum(1 for i in range(4) for j in range(i + 1, 4) if perm[i] > perm[j])
        symbol[perm] = -1.0 if inversions % 2 else 1.0
    return symbol


LEVI_CIVITA = _levi_civita()

# Pairs (a, b) with a < b, the coordinate basis of 2-forms
FORM_PAIRS = [(a, b) for a in range(4) for b in range(a + 1, 4)]

Form = Union[Jet, 'TwoForm']


def _components(form: Form) -> Jet:
    return form.components if isinstance(form, TwoForm) else form


def coordinate_pfaffian(form: Form) -> Jet:
    """Pf of the coordinate components: f01 f23 - f02 f13 + f03 f12."""
    f = _components(form)
    return f[0, 1] * f[2, 3] - f[0, 2] * f[1, 3] + f[0, 3] * f[1, 2]


@dataclass(frozen=True)
class TwoForm:
    """Antisymmetric (4, 4) jet."""
    components: Jet

    def __post_init__(self):
        c = self.components
        if c.shape != (4, 4):
            raise PreconditionError(f"A 2-form needs shape (4, 4), got {c.shape}")
        asym = np.max(np.abs(c.coeffs + np.swapaxes(c.coeffs, 0, 1)))
        scale = max(1.0, float(np.max(np.abs(c.coeffs))))
        if asym > 1e-12 * scale:
            raise PreconditionError(f"2-form components are not antisymmetric (defect {asym:.3e})")


@dataclass(frozen=True)
class Metric4:
    """
    Riemannian metric with its inverse, orientation density and Hodge tensor.

    Attributes:
        g: (4, 4) jet of metric components
        inverse: (4, 4) jet of g^ij
        volume: Scalar jet eps_0123 for the chosen orientation
        star: (4, 4, 4, 4) jet S_ab^pq with (*a)_ab = S_ab^pq a_pq
    """
    g: Jet
    inverse: Jet
    volume: Jet
    star: Jet

    @classmethod
    def from_components(cls, g: Jet, omega: Optional[Form] = None,
                        volume: Optional[Jet] = None) -> 'Metric4':
        """
        Validate metric components and precompute derived data.

        The orientation is taken from ``volume`` when given, otherwise from
        ``omega`` (eps_0123 = Pf(omega)), otherwise it is the coordinate
        orientation with eps_0123 = sqrt(det g).

        Raises:
            SignatureError: If g is not symmetric positive definite
        """
        if g.shape != (4, 4):
            raise SignatureError(f"Metric needs shape (4, 4), got {g.shape}")

        # Check 1: symmetry at every coefficient
        asym = np.max(np.abs(g.coeffs - np.swapaxes(g.coeffs, 0, 1)))
        scale = max(1.0, float(np.max(np.abs(g.coeffs))))
        if asym > 1e-12 * scale:
            raise SignatureError(f"Metric components are not symmetric (defect {asym:.3e})")

        # Check 2: positive leading minors of the value
        base = np.asarray(g.value)
        for k in range(1, 5):
            minor = np.linalg.det(base[:k, :k])
            if not np.isfinite(minor) or minor <= 0.0:
                raise SignatureError(
                    f"Metric is not positive definite: leading minor {k} = {minor:.6e}"
                )

        inverse = jets.inverse(g)

        if volume is None:
            if omega is not None:
                volume = coordinate_pfaffian(omega)
            else:
                det = contract('abcd,a,b,c,d->', LEVI_CIVITA, g[0], g[1], g[2], g[3])
                volume = jets.sqrt(det)

        star = contract('abef,ep,fq->abpq', LEVI_CIVITA, inverse, inverse) * volume * 0.5
        return cls(g=g, inverse=inverse, volume=volume, star=star)

    @property
    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.g.value))))


@dataclass(frozen=True)
class ComplexStructureField:
    """Endomorphism field J with matrix[c, a] = J^c_a."""
    matrix: Jet

    @classmethod
    def from_metric_and_form(cls, metric: Metric4, omega: Form) -> 'ComplexStructureField':
        return cls(contract('cb,ab->ca', metric.inverse, _components(omega)))

    def check(self, metric: Metric4, tol: float = 1e-9) -> None:
        """
        Raises:
            PreconditionError: If J^2 != -Id or g(J., J.) != g at the point
        """
        J = np.asarray(self.matrix.value)
        square = J @ J + np.eye(4)
        if np.max(np.abs(square)) > tol * metric.scale:
            raise PreconditionError(f"J does not square to -Id (defect {np.max(np.abs(square)):.3e})")
        g = np.asarray(metric.g.value)
        compat = np.einsum('ca,db,cd->ab', J, J, g) - g
        if np.max(np.abs(compat)) > tol * metric.scale:
            raise PreconditionError(f"J is not g-orthogonal (defect {np.max(np.abs(compat)):.3e})")

    def on_vector(self, vector: Jet) -> Jet:
        return contract('ca,a->c', self.matrix, vector)

    def on_one_form(self, alpha: Jet) -> Jet:
        return -contract('c,cb->b', alpha, self.matrix)


# ==================== 2-forms ====================

def raise_form(metric: Metric4, form: Form) -> Jet:
    return contract('ac,bd,cd->ab', metric.inverse, metric.inverse, _components(form))


def inner(metric: Metric4, a: Form, b: Form) -> Jet:
    """<a, b> = 1/2 a_ij b^ij."""
    return contract('ab,ab->', _components(a), raise_form(metric, b)) * 0.5


def hodge_star(metric: Metric4, form: Form, orientation: int = 1) -> Jet:
    """Hodge star on 2-forms; ``orientation=-1`` flips to the opposite orientation."""
    return contract('abpq,pq->ab', metric.star, _components(form)) * float(orientation)


def sd_asd_split(metric: Metric4, form: Form, orientation: int = 1) -> Tuple[Jet, Jet]:
    """Selfdual and anti-selfdual parts (f+, f-) with f = f+ + f-."""
    f = _components(form)
    star = hodge_star(metric, f, orientation)
    return (f + star) * 0.5, (f - star) * 0.5


def pfaffian(form: Form, metric: Metric4) -> Jet:
    """pf(f) = 2 (f ^ f) / eps_0123, so pf(omega) = 4 for the Kähler form."""
    f = _components(form)
    return four_form_ratio(f, f, metric.volume) * 2.0


def asd_eigendata(form: Form, metric: Metric4, orientation: int = 1,
                  zero_threshold: float = 1e-8) -> Tuple[Jet, Optional[Jet]]:
    """
    Eigen-decomposition of an anti-selfdual 2-form f = lambda * omega_I.

    Returns (lambda, omega_I) with lambda = sqrt(1/4 f_ij f^ij) >= 0 and
    omega_I the unit anti-selfdual form; omega_I is None where lambda
    vanishes below ``zero_threshold`` times the metric scale.

    Raises:
        PreconditionError: If the form is not anti-selfdual
    """
    f = _components(form)
    selfdual, _ = sd_asd_split(metric, f, orientation)
    defect = float(np.max(np.abs(selfdual.value)))
    size = max(1.0, float(np.max(np.abs(f.value))))
    if defect > 1e-8 * size:
        raise PreconditionError(f"Form is not anti-selfdual (selfdual part {defect:.3e})")

    lam_sq = contract('ab,ab->', f, raise_form(metric, f)) * 0.25
    threshold = zero_threshold * metric.scale
    if float(lam_sq.value) <= threshold * threshold:
        return jets.constant(np.sqrt(max(float(lam_sq.value), 0.0)), f.space), None
    lam = jets.sqrt(lam_sq)
    return lam, f / lam


# ==================== Exterior calculus ====================

def wedge_one_two(theta: Jet, form: Form) -> Jet:
    """(theta ^ F)_abc = theta_a F_bc + theta_b F_ca + theta_c F_ab."""
    f = _components(form)
    first = contract('a,bc->abc', theta, f)
    return first + contract('bca->abc', first) + contract('cab->abc', first)


def exterior_derivative(form: Jet) -> Jet:
    """d of a 1-form (shape (4,)) or of a 2-form (shape (4, 4))."""
    form = _components(form)
    d = jets.gradient(form)
    if form.shape == (4,):
        return d - d.T
    if form.shape == (4, 4):
        return d + contract('bca->abc', d) + contract('cab->abc', d)
    raise PreconditionError(f"exterior_derivative() supports 1- and 2-forms, got shape {form.shape}")


def four_form_ratio(first: Jet, second: Jet, volume: Jet) -> Jet:
    """(first ^ second)_0123 / eps_0123 for two 2-forms."""
    top = contract('ijkl,ij,kl->', LEVI_CIVITA, first, second) * 0.25
    return top / volume


# ==================== Norms and spectra (values only) ====================

def tensor_norm(values: np.ndarray, inverse: np.ndarray) -> float:
    """Full g-norm sqrt(T_a..d T^a..d) of a covariant tensor."""
    values = np.asarray(values, dtype=float)
    raised = values
    for axis in range(values.ndim):
        raised = np.moveaxis(np.tensordot(inverse, raised, axes=([1], [axis])), 0, axis)
    return float(np.sqrt(max(float(np.sum(values * raised)), 0.0)))


def bundle_basis(star: np.ndarray, inverse: np.ndarray, side: int) -> np.ndarray:
    """
    Orthonormal basis (3, 4, 4) of Lambda+ (side=+1) or Lambda- (side=-1).

    Built by projecting the six coordinate 2-forms and orthonormalizing with
    their Gram matrix.
    """
    projected = []
    for a, b in FORM_PAIRS:
        e = np.zeros((4, 4))
        e[a, b], e[b, a] = 1.0, -1.0
        projected.append(0.5 * (e + side * np.einsum('abpq,pq->ab', star, e)))
    spanning = np.array(projected)
    raised = np.einsum('ac,bd,kcd->kab', inverse, inverse, spanning)
    gram = 0.5 * np.einsum('kab,lab->kl', spanning, raised)
    weights, vectors = np.linalg.eigh(gram)
    top_w, top_v = weights[-3:], vectors[:, -3:]
    return np.einsum('kn,kab->nab', top_v, spanning) / np.sqrt(top_w)[:, None, None]


def form_operator(tensor: np.ndarray, form: np.ndarray, inverse: np.ndarray) -> np.ndarray:
    """Curvature-type operator on 2-forms: A(a)_cd = -1/2 a^ab T_abcd."""
    raised = np.einsum('ac,bd,cd->ab', inverse, inverse, form)
    return -0.5 * np.einsum('ab,abcd->cd', raised, tensor)


@dataclass
class Spectrum:
    """
    Eigen-decomposition of a curvature-type operator restricted to Lambda+-.

    Attributes:
        eigenvalues: Ascending eigenvalues (3,)
        eigenforms: Matching unit eigenforms (3, 4, 4)
        gap: Distance between the two closest eigenvalues
        simple_value: The eigenvalue away from the closest pair
        simple_form: Its eigenform
    """
    eigenvalues: np.ndarray
    eigenforms: np.ndarray
    gap: float
    simple_value: float
    simple_form: np.ndarray


def operator_spectrum(tensor: np.ndarray, star: np.ndarray, inverse: np.ndarray,
                      side: int) -> Spectrum:
    basis = bundle_basis(star, inverse, side)
    raised = np.einsum('ac,bd,kcd->kab', inverse, inverse, basis)
    images = -0.5 * np.einsum('jab,abcd->jcd', raised, tensor)
    matrix = 0.5 * np.einsum('icd,jcd->ij', raised, images)
    matrix = 0.5 * (matrix + matrix.T)
    values, vectors = np.linalg.eigh(matrix)
    forms = np.einsum('jn,jab->nab', vectors, basis)

    lower, upper = values[1] - values[0], values[2] - values[1]
    simple = 2 if lower <= upper else 0
    return Spectrum(
        eigenvalues=values,
        eigenforms=forms,
        gap=float(min(lower, upper)),
        simple_value=float(values[simple]),
        simple_form=forms[simple],
    )


def eigenform_residual(tensor: np.ndarray, form: np.ndarray, inverse: np.ndarray) -> float:
    """Relative defect of ``form`` from being an eigenform of the operator."""
    image = form_operator(tensor, form, inverse)
    raised = np.einsum('ac,bd,cd->ab', inverse, inverse, form)
    norm_sq = np.sum(form * raised)
    if norm_sq <= 0.0:
        raise PreconditionError("eigenform_residual() needs a non-zero form")
    eigenvalue = np.sum(image * raised) / norm_sq
    return tensor_norm(image - eigenvalue * form, inverse) / np.sqrt(norm_sq)
