"""
Curvature engine: from metric and symplectic form jets at a point to every
curvature quantity the verification suites need.

Index conventions:
- Gamma[k, i, j] = Gamma^k_ij
- R(X, Y) = nabla_X nabla_Y - nabla_Y nabla_X - nabla_[X,Y];
  riemann_up[l, k, i, j] = R^l_kij with R(d_i, d_j) d_k = R^l_kij d_l
- riemann[a, b, c, d] = g(R(d_a, d_b) d_c, d_d), so sectional curvature is
  R(X, Y, Y, X) and Ric_jk = R^i_kij
- s = Scal / 6, Ric0 = Ric - Scal/4 g, Schouten h = 1/2 Ric0 + Scal/24 g
- Cotton-York C[a, b, c] = -nabla_a h_bc + nabla_b h_ac; its 2-form slot is
  (a, b), so the selfdual / anti-selfdual parts project that pair. With
  these conventions delta W(c) = C(c) on every 4-manifold.
- Weyl operator on 2-forms: W(a)_cd = -1/2 a^ab W_abcd.

A jet of metric order k gives curvature of order k - 2; the Cotton-York
tensor and delta W- need k >= 3 and the Bach tensor needs k = 4. Fields
that the order cannot support stay None.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src import jets
from src.errors import ConfigurationError, OrderError, PreconditionError
from src.jets import Jet, contract
from src.logger import get_logger
from src.tensor import (
    LEVI_CIVITA,
    ComplexStructureField,
    Metric4,
    asd_eigendata,
    eigenform_residual,
    exterior_derivative,
    inner,
    operator_spectrum,
    pfaffian,
    tensor_norm,
    wedge_one_two,
)

_LETTERS = 'abcdfgh'
LAGRANGIAN_MIN_SAMPLES = 8


def _value(jet: Jet) -> np.ndarray:
    return np.asarray(jet.value, dtype=float)


# ==================== Levi-Civita connection ====================

@dataclass
class LeviCivita:
    """Christoffel symbols, Riemann and Ricci tensors of a metric jet."""
    metric: Metric4
    christoffel: Jet
    riemann_up: Jet
    riemann: Jet
    ricci: Jet
    scal: Jet


def levi_civita(metric: Metric4) -> LeviCivita:
    """
    Raises:
        OrderError: If the metric jet has order < 2
    """
    g, ginv = metric.g, metric.inverse
    jets.require_order(g, 2, 'Riemann curvature')

    dg = jets.gradient(g)
    gamma = (contract('kl,ilj->kij', ginv, dg)
             + contract('kl,jli->kij', ginv, dg)
             - contract('kl,lij->kij', ginv, dg)) * 0.5

    dgamma = jets.gradient(gamma)
    riemann_up = (contract('iljk->lkij', dgamma)
                  - contract('jlik->lkij', dgamma)
                  + contract('lim,mjk->lkij', gamma, gamma)
                  - contract('ljm,mik->lkij', gamma, gamma))
    riemann = contract('dl,lcab->abcd', g, riemann_up)
    ricci = contract('ikij->jk', riemann_up)
    scal = contract('jk,jk->', ginv, ricci)
    return LeviCivita(metric, gamma, riemann_up, riemann, ricci, scal)


def covariant_derivative(tensor: Jet, christoffel: Jet) -> Jet:
    """
    nabla of a covariant tensor; the derivative index comes first.

    (nabla T)[e, a, b, ...] = d_e T_ab.. - Gamma^m_ea T_mb.. - Gamma^m_eb T_am.. - ...
    """
    rank = len(tensor.shape)
    letters = _LETTERS[:rank]
    result = jets.gradient(tensor)
    for slot in range(rank):
        swapped = letters[:slot] + 'm' + letters[slot + 1:]
        result = result - contract(f'me{letters[slot]},{swapped}->e{letters}',
                                   christoffel, tensor)
    return result


def kulkarni_nomizu(h: Jet, g: Jet) -> Jet:
    """(h o g)_abcd = h_bc g_ad + h_ad g_bc - h_ac g_bd - h_bd g_ac."""
    return (contract('bc,ad->abcd', h, g) + contract('ad,bc->abcd', h, g)
            - contract('ac,bd->abcd', h, g) - contract('bd,ac->abcd', h, g))


def lee_form(form: Jet) -> Jet:
    """
    Lee form theta of a non-degenerate 2-form F, solving dF = -2 theta ^ F.

    The map theta -> theta ^ F is invertible in dimension four, so the four
    independent components of the 3-form equation determine theta.
    """
    jets.require_order(form, 1, 'Lee form')
    d_form = exterior_derivative(form)
    rows = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
    matrix = []
    for a, b, c in rows:
        entries = []
        for m in range(4):
            if m == a:
                entries.append(form[b, c])
            elif m == b:
                entries.append(form[c, a])
            elif m == c:
                entries.append(form[a, b])
            else:
                entries.append(0.0)
        matrix.append(entries)
    lhs = jets.stack(matrix, form.space)
    rhs = jets.stack([d_form[a, b, c] for a, b, c in rows], form.space) * -0.5
    return contract('mr,r->m', jets.inverse(lhs), rhs)


def lee_form_residual(form: Jet, theta: Jet, inverse: np.ndarray) -> float:
    """g-norm of dF + 2 theta ^ F."""
    residual = exterior_derivative(form) + wedge_one_two(theta, form) * 2.0
    return tensor_norm(_value(residual), inverse)


def conformal_scalar_from_lee(s: Jet, theta: Jet, lc: LeviCivita) -> Jet:
    """kappa = s + delta(theta) - |theta|^2 with delta theta = -g^ij nabla_i theta_j."""
    ginv = lc.metric.inverse
    divergence = contract('ij,ij->', ginv, covariant_derivative(theta, lc.christoffel))
    return s - divergence - contract('ij,i,j->', ginv, theta, theta)


# ==================== Bundle ====================

@dataclass
class CurvatureBundle:
    """
    Curvature data at one point. Jets keep the derivatives that later
    identities need; unsupported fields are None.
    """
    point: Tuple[float, ...]
    order: int
    metric: Metric4
    omega: Jet
    complex_structure: ComplexStructureField
    connection: LeviCivita
    scale: float
    s: Jet
    ricci0: Jet
    schouten: Jet
    weyl: Jet
    weyl_plus: Jet
    weyl_minus: Jet
    ricci_anti_invariant: float
    rho: Optional[Jet] = None
    rho0: Optional[Jet] = None
    rho_tilde: Optional[Jet] = None
    p: Optional[Jet] = None
    lambda_ric: Optional[Jet] = None
    omega_i_ricci: Optional[Jet] = None
    xi_rho: Optional[Jet] = None
    eta_rho: Optional[Jet] = None
    omega_i: Optional[Jet] = None
    mu: Optional[Jet] = None
    theta: Optional[Jet] = None
    kappa: Optional[Jet] = None
    c: Optional[float] = None
    cotton: Optional[Jet] = None
    cotton_plus: Optional[Jet] = None
    cotton_minus: Optional[Jet] = None
    weyl_minus_divergence: Optional[Jet] = None
    bach: Optional[Jet] = None
    bach_plus_route: Optional[Jet] = None
    bach_minus_route: Optional[Jet] = None
    references: Dict[str, Jet] = field(default_factory=dict)

    # Convenience accessors used by the suites
    @property
    def christoffel(self) -> Jet:
        return self.connection.christoffel

    @property
    def riemann(self) -> Jet:
        return self.connection.riemann

    @property
    def ricci(self) -> Jet:
        return self.connection.ricci

    @property
    def scal(self) -> Jet:
        return self.connection.scal

    @property
    def inverse(self) -> np.ndarray:
        return _value(self.metric.inverse)

    def norm(self, jet: Optional[Jet]) -> Optional[float]:
        """g-norm of a covariant tensor value."""
        if jet is None:
            return None
        return tensor_norm(_value(jet), self.inverse)


def _pair_project(metric: Metric4, tensor: Jet, slot: str, sign: int) -> Jet:
    """1/2 (T +- *T) on the 2-form slot named by ``slot`` ('first' or 'last')."""
    if slot == 'first':
        rank = len(tensor.shape)
        rest = 'cdf'[:rank - 2]
        starred = contract(f'abpq,pq{rest}->ab{rest}', metric.star, tensor)
    else:
        starred = contract('cdpq,abpq->abcd', metric.star, tensor)
    return (tensor + starred * float(sign)) * 0.5


def compute_bundle(g: Jet, omega: Jet, omega_i: Optional[Jet] = None,
                   point: Sequence[float] = (), references: Optional[Dict[str, Jet]] = None,
                   zero_threshold: float = 1e-8) -> CurvatureBundle:
    """
    Curvature bundle from metric and symplectic form jets.

    Args:
        g: (4, 4) metric jet (order >= 2)
        omega: (4, 4) jet of the fundamental 2-form; fixes J and the orientation
        omega_i: Optional unit anti-selfdual form used for mu and the Lee form
        point: Chart coordinates, recorded in the bundle
        references: Closed-form fields to carry along
        zero_threshold: Relative size below which lambda_Ric counts as zero

    Raises:
        SignatureError: If g is not positive definite
        OrderError: If g has order < 2
    """
    metric = Metric4.from_components(g, omega=omega)
    lc = levi_civita(metric)
    order = g.order
    J = ComplexStructureField.from_metric_and_form(metric, omega)

    s = lc.scal / 6.0
    ricci0 = lc.ricci - g * (lc.scal / 4.0)
    schouten = ricci0 * 0.5 + g * (lc.scal / 24.0)
    weyl = lc.riemann - kulkarni_nomizu(schouten, g)
    weyl_plus = _pair_project(metric, weyl, 'last', 1)
    weyl_minus = _pair_project(metric, weyl, 'last', -1)

    ginv_v = _value(metric.inverse)
    scale = max(1.0, tensor_norm(_value(lc.riemann), ginv_v))

    Jm = _value(J.matrix)
    ric_v = _value(lc.ricci)
    anti = ric_v - np.einsum('ca,db,cd->ab', Jm, Jm, ric_v)
    ricci_anti = tensor_norm(anti, ginv_v)

    bundle = CurvatureBundle(
        point=tuple(float(x) for x in point), order=order, metric=metric,
        omega=omega, complex_structure=J, connection=lc, scale=scale, s=s,
        ricci0=ricci0, schouten=schouten, weyl=weyl, weyl_plus=weyl_plus,
        weyl_minus=weyl_minus, ricci_anti_invariant=ricci_anti,
        omega_i=omega_i, references=dict(references or {}),
    )

    # Ricci form data (needs J-invariant Ricci)
    if ricci_anti <= 1e-8 * scale:
        bundle.rho = contract('ca,cb->ab', J.matrix, lc.ricci)
        bundle.rho0 = contract('ca,cb->ab', J.matrix, ricci0)
        bundle.rho_tilde = bundle.rho0 * 0.5 + omega * (s * 0.25)
        bundle.p = pfaffian(bundle.rho_tilde, metric)
        lam, omega_ricci = asd_eigendata(bundle.rho0, metric, zero_threshold=zero_threshold)
        bundle.lambda_ric = lam
        bundle.omega_i_ricci = omega_ricci
        bundle.xi_rho = s * 0.5 + lam
        bundle.eta_rho = s * 0.5 - lam
        if omega_i is not None:
            bundle.mu = inner(metric, bundle.rho0, omega_i) / inner(metric, omega_i, omega_i)

    # Lee form and conformal scalar kappa
    lee_source = omega_i if omega_i is not None else bundle.omega_i_ricci
    if lee_source is not None and lee_source.order >= 2:
        bundle.theta = lee_form(lee_source)
        bundle.kappa = conformal_scalar_from_lee(s, bundle.theta, lc)
        if bundle.lambda_ric is not None:
            bundle.c = float(bundle.kappa.value) * float(bundle.lambda_ric.value) ** 3

    if order >= 3:
        gamma = lc.christoffel
        nabla_h = covariant_derivative(schouten, gamma)
        cotton = contract('bac->abc', nabla_h) - nabla_h
        bundle.cotton = cotton
        bundle.cotton_plus = _pair_project(metric, cotton, 'first', 1)
        bundle.cotton_minus = _pair_project(metric, cotton, 'first', -1)
        nabla_wm = covariant_derivative(weyl_minus, gamma)
        bundle.weyl_minus_divergence = contract('fa,faecd->cde', metric.inverse, nabla_wm)

    if order >= 4:
        ginv = metric.inverse
        nabla_c = covariant_derivative(bundle.cotton, lc.christoffel)
        h_up = contract('ai,mj,ij->am', ginv, ginv, schouten)
        bundle.bach = (contract('am,abcm->bc', h_up, weyl)
                       - contract('ad,dabc->bc', ginv, nabla_c))
        for sign, half in ((1, weyl_plus), (-1, weyl_minus)):
            projected = (nabla_c + contract('abpq,dpqc->dabc', metric.star, nabla_c) * float(sign)) * 0.5
            route = (contract('am,abcm->bc', h_up, half)
                     - contract('ad,dabc->bc', ginv, projected)) * 2.0
            if sign > 0:
                bundle.bach_plus_route = route
            else:
                bundle.bach_minus_route = route

    return bundle


def curvature_bundle(instance, point: Sequence[float], order: int = jets.MAX_ORDER) -> CurvatureBundle:
    """
    Evaluate a family instance at a chart point and build its curvature bundle.

    Raises:
        DomainError: If the point lies outside the instance's validity box
        SignatureError: If the metric is not positive definite there
        OrderError: If ``order`` < 2

    Example:
        >>> inst = orthotoric(OrthotoricParams.biextremal(1, 0, 0, 0, 0, 1, -1))
        >>> b = curvature_bundle(inst, (2.0, 0.0, 0.5, 0.5))
        >>> round(float(b.s.value), 12)
        -4.0
    """
    logger = get_logger()
    if order < 2:
        raise OrderError(f"Curvature needs jets of order >= 2, got {order}")
    instance.check_point(point)
    x = jets.coordinates(point, order)
    g, omega = instance.fields(x)
    references = instance.evaluate_references(x)
    omega_i = references.get('omega_i')
    bundle = compute_bundle(g, omega, omega_i=omega_i, point=point, references=references)
    logger.debug(f"{instance.name}: bundle at {tuple(round(p, 6) for p in point)} "
                 f"s={float(bundle.s.value):.6e} scale={bundle.scale:.3e}")
    return bundle


# ==================== Ricci form ====================

@dataclass
class RicciFormData:
    rho: Jet
    rho0: Jet
    rho_tilde: Jet
    p: Jet
    lambda_ric: Jet
    xi: Jet
    eta: Jet
    mu: Optional[Jet]


def ricci_form_data(bundle: CurvatureBundle) -> RicciFormData:
    """
    Raises:
        PreconditionError: If the Ricci tensor is not J-invariant
    """
    if bundle.rho is None:
        raise PreconditionError(
            f"Ricci tensor is not J-invariant at {bundle.point} "
            f"(anti-invariant part {bundle.ricci_anti_invariant:.3e})"
        )
    return RicciFormData(bundle.rho, bundle.rho0, bundle.rho_tilde, bundle.p,
                         bundle.lambda_ric, bundle.xi_rho, bundle.eta_rho, bundle.mu)


def cotton_asd_and_codiff(bundle: CurvatureBundle) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    (C-, delta W-, |C- - delta W-|) at the point.

    Raises:
        OrderError: If the bundle was built with order < 3
    """
    if bundle.cotton_minus is None:
        raise OrderError("Cotton-York tensor needs metric jets of order >= 3")
    cm = _value(bundle.cotton_minus)
    dwm = _value(bundle.weyl_minus_divergence)
    return cm, dwm, tensor_norm(cm - dwm, bundle.inverse)


# ==================== Identity residuals ====================

def _ricci_identity_terms(bundle: CurvatureBundle):
    if bundle.rho0 is None or bundle.rho0.order < 1:
        raise OrderError("nabla rho0 needs a J-invariant Ricci tensor and metric order >= 3")
    nabla_rho0 = _value(covariant_derivative(bundle.rho0, bundle.christoffel))
    ds = _value(jets.gradient(bundle.s))
    g = _value(bundle.metric.g)
    omega = _value(bundle.omega)
    J = _value(bundle.complex_structure.matrix)

    j_flat = np.einsum('bm,mz->zb', g, J)              # (JZ)^flat_b
    ds_wedge_jz = ds[None, :, None] * j_flat[:, None, :] - ds[None, None, :] * j_flat[:, :, None]
    j_ds = -np.einsum('c,cb->b', ds, J)
    jds_wedge_z = j_ds[None, :, None] * g[:, None, :] - j_ds[None, None, :] * g[:, :, None]
    ds_omega = np.einsum('z,ab->zab', ds, omega)
    return nabla_rho0, ds_omega, ds_wedge_jz, jds_wedge_z, J


def ricci_form_identity_residual(bundle: CurvatureBundle) -> float:
    """
    |nabla_Z rho0 + 2 C-(JZ) + 1/2 ds(Z) omega - 1/2 (ds ^ JZ - Jds ^ Z)|

    Holds on Kähler surfaces and on almost-Kähler ones with J-invariant Ricci.
    """
    nabla_rho0, ds_omega, ds_wedge_jz, jds_wedge_z, J = _ricci_identity_terms(bundle)
    cm = _value(bundle.cotton_minus)
    c_jz = np.einsum('abm,mz->zab', cm, J)
    rhs = -2.0 * c_jz - 0.5 * ds_omega + 0.5 * (ds_wedge_jz - jds_wedge_z)
    return tensor_norm(nabla_rho0 - rhs, bundle.inverse)


def kahler_ricci_identity_residual(bundle: CurvatureBundle) -> float:
    """|nabla_Z rho0 + 2 C(JZ) + 3/2 ds(Z) omega - ds ^ JZ| (Kähler, full Cotton-York)."""
    nabla_rho0, ds_omega, ds_wedge_jz, _, J = _ricci_identity_terms(bundle)
    c_jz = np.einsum('abm,mz->zab', _value(bundle.cotton), J)
    rhs = -2.0 * c_jz - 1.5 * ds_omega + ds_wedge_jz
    return tensor_norm(nabla_rho0 - rhs, bundle.inverse)


def matsumoto_tanno_residual(bundle: CurvatureBundle) -> float:
    """|nabla_Z rho0 + 1/2 ds(Z) omega - 1/2 (ds ^ JZ - Jds ^ Z)|: rho is a hamiltonian 2-form."""
    nabla_rho0, ds_omega, ds_wedge_jz, jds_wedge_z, _ = _ricci_identity_terms(bundle)
    rhs = -0.5 * ds_omega + 0.5 * (ds_wedge_jz - jds_wedge_z)
    return tensor_norm(nabla_rho0 - rhs, bundle.inverse)


def selfdual_cotton_residual(bundle: CurvatureBundle) -> float:
    """|C+_cde - grad^a s W+_aecd / s| (Kähler, s != 0)."""
    if bundle.cotton_plus is None:
        raise OrderError("Cotton-York tensor needs metric jets of order >= 3")
    s = float(bundle.s.value)
    if s == 0.0:
        raise PreconditionError("Selfdual Cotton-York identity needs s != 0")
    grad_s = bundle.inverse @ _value(jets.gradient(bundle.s))
    predicted = np.einsum('a,aecd->cde', grad_s, _value(bundle.weyl_plus)) / s
    return tensor_norm(_value(bundle.cotton_plus) - predicted, bundle.inverse)


def bach_route_residual(bundle: CurvatureBundle) -> float:
    """max |B - B(+route)|, |B - B(-route)|."""
    if bundle.bach is None:
        raise OrderError("Bach tensor needs metric jets of order 4")
    b = _value(bundle.bach)
    return max(tensor_norm(b - _value(bundle.bach_plus_route), bundle.inverse),
               tensor_norm(b - _value(bundle.bach_minus_route), bundle.inverse))


def first_bianchi_residual(bundle: CurvatureBundle) -> float:
    r = _value(bundle.riemann)
    cyclic = r + np.einsum('bcad->abcd', r) + np.einsum('cabd->abcd', r)
    return tensor_norm(cyclic, bundle.inverse)


def complex_structure_parallel_residual(bundle: CurvatureBundle) -> float:
    """|nabla omega|; vanishes exactly when the structure is Kähler."""
    return tensor_norm(_value(covariant_derivative(bundle.omega, bundle.christoffel)),
                       bundle.inverse)


def symplectic_residual(bundle: CurvatureBundle) -> float:
    """|d omega|."""
    return tensor_norm(_value(exterior_derivative(bundle.omega)), bundle.inverse)


def ricci_anti_invariance(bundle: CurvatureBundle) -> float:
    return bundle.ricci_anti_invariant


def gradient_field(bundle: CurvatureBundle, function: Jet) -> Jet:
    return contract('ab,b->a', bundle.metric.inverse, jets.gradient(function))


def hamiltonian_field(bundle: CurvatureBundle, function: Jet) -> Jet:
    """J grad f."""
    return bundle.complex_structure.on_vector(gradient_field(bundle, function))


def killing_residual(bundle: CurvatureBundle, vector: Jet) -> float:
    """|L_K g| = |nabla_i K_j + nabla_j K_i| for a vector field jet K."""
    jets.require_order(vector, 1, 'Killing residual')
    lowered = contract('jm,m->j', bundle.metric.g, vector)
    nabla = _value(covariant_derivative(lowered, bundle.christoffel))
    return tensor_norm(nabla + nabla.T, bundle.inverse)


def holomorphic_potential_residual(bundle: CurvatureBundle, function: Jet) -> float:
    """|S| with S(X, Y) = H(X, Y) - H(JX, JY), H the Hessian of f."""
    jets.require_order(function, 2, 'Hessian')
    hessian = _value(covariant_derivative(jets.gradient(function), bundle.christoffel))
    J = _value(bundle.complex_structure.matrix)
    s_tensor = hessian - np.einsum('me,cb,mc->eb', J, J, hessian)
    return tensor_norm(s_tensor, bundle.inverse)


def nijenhuis(bundle: CurvatureBundle) -> float:
    """g-norm of N^k_ij = [JX,JY] - J[JX,Y] - J[X,JY] - [X,Y] on coordinate fields."""
    J = bundle.complex_structure.matrix
    jets.require_order(J, 1, 'Nijenhuis tensor')
    Jv = _value(J)
    dJ = _value(jets.gradient(J))
    tensor = (np.einsum('mi,mkj->kij', Jv, dJ) - np.einsum('mj,mki->kij', Jv, dJ)
              + np.einsum('km,jmi->kij', Jv, dJ) - np.einsum('km,imj->kij', Jv, dJ))
    lowered = np.einsum('ak,kij->aij', _value(bundle.metric.g), tensor)
    return tensor_norm(lowered, bundle.inverse)


def lagrangian_curvatures(bundle: CurvatureBundle, n_samples: int = 64,
                          rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Sectional curvatures R(X, Y, Y, X) of random Lagrangian planes.

    Planes span(X, Y) with X, Y orthonormal and omega(X, Y) = 0 (Y is taken
    orthogonal to X and JX). Nearly degenerate draws are redrawn.

    Raises:
        ConfigurationError: If ``n_samples`` < 8
    """
    if n_samples < LAGRANGIAN_MIN_SAMPLES:
        raise ConfigurationError(
            f"Lagrangian sampling needs at least {LAGRANGIAN_MIN_SAMPLES} planes, got {n_samples}"
        )
    rng = rng if rng is not None else np.random.default_rng(0)
    g = _value(bundle.metric.g)
    J = _value(bundle.complex_structure.matrix)
    R = _value(bundle.riemann)
    values = []
    while len(values) < n_samples:
        x = rng.normal(size=4)
        x /= np.sqrt(x @ g @ x)
        jx = J @ x
        y = rng.normal(size=4)
        y -= (y @ g @ x) * x + (y @ g @ jx) * jx
        norm = np.sqrt(max(y @ g @ y, 0.0))
        if norm < 1e-6:
            continue
        y /= norm
        values.append(np.einsum('abcd,a,b,c,d->', R, x, y, y, x))
    return np.array(values)


def lagrangian_spread(instance, point: Sequence[float], n_samples: int = 64,
                      rng: Optional[np.random.Generator] = None,
                      bundle: Optional[CurvatureBundle] = None) -> Tuple[float, float, float]:
    """
    Extremes of the Lagrangian sectional curvature at a point.

    Args:
        instance: Family instance
        point: Chart point
        n_samples: Number of Lagrangian planes (at least 8)
        rng: Random generator for the planes (seeded 0 when omitted)
        bundle: Curvature bundle already computed at ``point``

    Returns:
        (min K, max K, max K - min K)

    Example:
        >>> low, high, spread = lagrangian_spread(kahler_product(1, -1), (0.1, 0.0, 0.2, -0.1))
        >>> spread < 1e-9
        True
    """
    if bundle is None:
        bundle = curvature_bundle(instance, point, order=2)
    values = lagrangian_curvatures(bundle, n_samples, rng)
    low, high = float(values.min()), float(values.max())
    return low, high, high - low


# ==================== W+- spectra ====================

def weyl_spectrum(bundle: CurvatureBundle, side: int):
    """Spectrum of W+ (side=+1) or W- (side=-1) acting on Lambda+ / Lambda-."""
    tensor = bundle.weyl_plus if side > 0 else bundle.weyl_minus
    return operator_spectrum(_value(tensor), _value(bundle.metric.star), bundle.inverse, side)


def weyl_eigenform_residual(bundle: CurvatureBundle, side: int, form: np.ndarray) -> float:
    tensor = bundle.weyl_plus if side > 0 else bundle.weyl_minus
    return eigenform_residual(_value(tensor), np.asarray(form, dtype=float), bundle.inverse)


# ==================== Bach form ====================

@dataclass
class BachForms:
    """
    Anti-selfdual part of the Bach 2-form B~(X, Y) = B(JX, Y) against the
    candidate (d J ds)_0 + s rho0, with the fitted proportionality constant.
    """
    bach_form: np.ndarray
    candidate: np.ndarray
    constant: float
    residual: float


def bach_forms(bundle: CurvatureBundle) -> BachForms:
    """
    Raises:
        OrderError: If the bundle was built with order < 4
        PreconditionError: If the Ricci tensor is not J-invariant
    """
    if bundle.bach is None:
        raise OrderError("Bach tensor needs metric jets of order 4")
    data = ricci_form_data(bundle)
    J = _value(bundle.complex_structure.matrix)
    star = _value(bundle.metric.star)
    b_form = np.einsum('ca,cb->ab', J, _value(bundle.bach))
    b_form = 0.5 * (b_form - np.einsum('abpq,pq->ab', star, b_form))

    j_ds = bundle.complex_structure.on_one_form(jets.gradient(bundle.s))
    d_j_ds = _value(exterior_derivative(j_ds))
    d_j_ds = 0.5 * (d_j_ds - np.einsum('abpq,pq->ab', star, d_j_ds))
    candidate = d_j_ds + float(bundle.s.value) * _value(data.rho0)

    ginv = bundle.inverse
    cand_sq = tensor_norm(candidate, ginv) ** 2
    if cand_sq <= 1e-24:
        return BachForms(b_form, candidate, float('nan'), tensor_norm(b_form, ginv))
    raised = np.einsum('ac,bd,cd->ab', ginv, ginv, candidate)
    constant = float(np.sum(b_form * raised) / cand_sq)
    residual = tensor_norm(b_form - constant * candidate, ginv) / np.sqrt(cand_sq)
    return BachForms(b_form, candidate, constant, residual)


# ==================== Hamiltonian 2-forms ====================

@dataclass
class HamiltonianReport:
    """
    Decomposition phi = phi0 + 3/2 sigma omega and residuals of the
    hamiltonian 2-form identities. Residuals that need a non-vanishing
    lambda are None where phi0 vanishes.
    """
    sigma: float
    pi: float
    lam: float
    xi: float
    eta: float
    closed: float
    twistor: float
    hamiltonian: float
    killing_trace: float
    killing_pfaffian: float
    poisson: float
    momentum_orthogonality: float
    trace_potential: float
    pfaffian_differential: Optional[float]
    lambda_swap: Optional[float]
    trace_conjugation: Optional[float]


def hamiltonian_analysis(bundle: CurvatureBundle, phi: Jet) -> HamiltonianReport:
    """
    Analyse a J-invariant 2-form phi as a candidate hamiltonian 2-form.

    Raises:
        PreconditionError: If phi is not J-invariant
        OrderError: If phi or the bundle carry too few derivatives
    """
    metric = bundle.metric
    J = bundle.complex_structure
    Jv = _value(J.matrix)
    ginv = bundle.inverse
    g = _value(metric.g)
    omega = bundle.omega
    jets.require_order(phi, 2, 'hamiltonian analysis')

    phi_v = _value(phi)
    invariance = np.einsum('ca,db,cd->ab', Jv, Jv, phi_v) - phi_v
    if np.max(np.abs(invariance)) > 1e-8 * max(1.0, float(np.max(np.abs(phi_v)))):
        raise PreconditionError(f"2-form is not J-invariant (defect {np.max(np.abs(invariance)):.3e})")

    sigma = inner(metric, phi, omega) / 3.0
    phi0 = phi - omega * (sigma * 1.5)
    lam, omega_i = asd_eigendata(phi0, metric)
    phi_tilde = phi0 * 0.5 + omega * (sigma * 0.25)
    pi = pfaffian(phi_tilde, metric)
    xi, eta = sigma * 0.5 + lam, sigma * 0.5 - lam

    closed = tensor_norm(_value(exterior_derivative(phi)), ginv)

    # nabla_X phi0 = T(beta)(X) with T(beta)(X) = -beta(X) omega + beta ^ JX - J beta ^ X
    nabla_phi0 = _value(covariant_derivative(phi0, bundle.christoffel))
    omega_v = _value(omega)
    j_flat = np.einsum('bm,mx->xb', g, Jv)
    basis = []
    for m in range(4):
        beta = np.zeros(4)
        beta[m] = 1.0
        j_beta = -Jv[m, :]
        term = -np.einsum('x,ab->xab', beta, omega_v)
        term += beta[None, :, None] * j_flat[:, None, :] - beta[None, None, :] * j_flat[:, :, None]
        term -= j_beta[None, :, None] * g[:, None, :] - j_beta[None, None, :] * g[:, :, None]
        basis.append(term)
    basis = np.array(basis)
    beta, *_ = np.linalg.lstsq(basis.reshape(4, -1).T, nabla_phi0.ravel(), rcond=None)
    twistor = tensor_norm(nabla_phi0 - np.einsum('m,mxab->xab', beta, basis), ginv)
    d_sigma = _value(jets.gradient(sigma))
    hamiltonian = tensor_norm(beta - 0.5 * d_sigma, ginv)

    k_trace = hamiltonian_field(bundle, sigma)
    k_pfaffian = hamiltonian_field(bundle, pi)
    poisson = float(np.einsum('ab,a,b->', omega_v, _value(k_trace), _value(k_pfaffian)))

    d_xi = _value(jets.gradient(xi))
    d_eta = _value(jets.gradient(eta))
    orthogonality = float(d_xi @ ginv @ d_eta)

    j_dsigma = -np.einsum('c,cb->b', d_sigma, Jv)
    pfaffian_differential = lambda_swap = trace_conjugation = None
    if omega_i is not None:
        d_pi = _value(jets.gradient(pi))
        phi_tilde_v = _value(phi_tilde)
        wedge = g[:, :, None] * j_dsigma[None, None, :] - g[:, None, :] * j_dsigma[None, :, None]
        top = 0.25 * np.einsum('ijkl,xij,kl->x', LEVI_CIVITA, wedge, phi_tilde_v)
        predicted = 2.0 * top / float(metric.volume.value)
        pfaffian_differential = tensor_norm(d_pi - predicted, ginv)

        d_lam_sq = _value(jets.gradient(lam * lam))
        lambda_swap = tensor_norm(d_lam_sq + np.einsum('a,ab->b', ginv @ j_dsigma, _value(phi0)), ginv)

        I = np.einsum('cb,ab->ca', ginv, _value(omega_i))
        i_dsigma = -np.einsum('c,cb->b', d_sigma, I)
        j_dlam = -np.einsum('c,cb->b', _value(jets.gradient(lam)), Jv)
        trace_conjugation = tensor_norm(i_dsigma - 2.0 * j_dlam, ginv)

    return HamiltonianReport(
        sigma=float(sigma.value), pi=float(pi.value), lam=float(lam.value),
        xi=float(xi.value), eta=float(eta.value), closed=closed, twistor=twistor,
        hamiltonian=hamiltonian,
        killing_trace=killing_residual(bundle, k_trace),
        killing_pfaffian=killing_residual(bundle, k_pfaffian),
        poisson=abs(poisson), momentum_orthogonality=abs(orthogonality),
        trace_potential=holomorphic_potential_residual(bundle, sigma),
        pfaffian_differential=pfaffian_differential,
        lambda_swap=lambda_swap,
        trace_conjugation=trace_conjugation,
    )


# ==================== Conformal scalar ====================

@dataclass
class ConformalScalar:
    """kappa by the conformal-metric route (A) and the Lee-form route (B)."""
    route_a: float
    route_b: float
    difference: float


def conformal_scalar(bundle: CurvatureBundle, factor: Jet,
                     omega_i: Optional[Jet] = None) -> ConformalScalar:
    """
    Route A: kappa = s(g~) / lambda^2 with g~ = lambda^-2 g.
    Route B: kappa = s + delta theta - |theta|^2 with d omega_I = -2 theta ^ omega_I.

    ``factor`` is any constant multiple of the conformal factor lambda.

    Raises:
        OrderError: If the factor or omega_I carry fewer than two derivatives
        PreconditionError: If no omega_I is available for route B
    """
    jets.require_order(factor, 2, 'conformal factor')
    inv_sq = jets.pow_int(factor, -2)
    metric = bundle.metric
    conformal = Metric4.from_components(metric.g * inv_sq,
                                        volume=metric.volume * (inv_sq * inv_sq))
    scal_bar = levi_civita(conformal).scal
    route_a = float(scal_bar.value) / 6.0 * float(inv_sq.value)

    if omega_i is None:
        omega_i = bundle.omega_i if bundle.omega_i is not None else bundle.omega_i_ricci
    if omega_i is None:
        raise PreconditionError("Lee-form route needs a unit anti-selfdual form omega_I")
    theta = lee_form(omega_i)
    route_b = float(conformal_scalar_from_lee(bundle.s, theta, bundle.connection).value)
    return ConformalScalar(route_a, route_b, abs(route_a - route_b))


# ==================== Calabi profile ====================

def profile_ricci_potential(psi: Jet, var: int) -> float:
    """
    Scalar curvature 2(v'/psi + v''/psi') from the Ricci potential
    v = t - 1/2 log psi - 1/2 log psi' of a Calabi profile psi(t).
    """
    jets.require_order(psi, 3, 'Calabi Ricci potential')
    psi_dot = jets.diff(psi, var)
    t = jets.seed(var, 0.0, psi.space.order) + 0.0
    v = t - jets.log(psi) * 0.5 - jets.log(psi_dot) * 0.5
    v_dot = jets.diff(v, var)
    v_ddot = jets.diff(v_dot, var)
    return 2.0 * (float(v_dot.value) / float(psi.value) + float(v_ddot.value) / float(psi_dot.value))
