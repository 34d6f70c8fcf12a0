"""
Explicit Kähler and almost-Kähler metric families.

Each constructor returns a ``FamilyInstance``: jet evaluators for the metric
and the fundamental 2-form in one coordinate chart, a validity box, and the
closed-form reference fields (scalar curvature, Ricci eigenvalue, conformal
scalar curvature, hamiltonian 2-form, ...) that the verification suites
compare the curvature engine against.

Coordinates per family:
- orthotoric:      (xi, eta, t, z)
- toric:           (x1, x2, t1, t2)
- calabi_type:     (x, y, z, t)
- hirzebruch:      (x, y, t, theta), t the log-radius, e^t = r^2
- ak_lebrun:       (x, y, z, t)
- kahler_product:  (x1, y1, x2, y2)
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from src import jets
from src.coefficients import (
    ProfileCoefficients,
    calabi_coefficients,
    hirzebruch_coefficients,
    polyder,
    polyval,
)
from src.errors import (
    ConfigurationError,
    ConstructionError,
    DomainError,
    IntegrationError,
    SignatureError,
    SingularPointError,
)
from src.jets import Jet, contract
from src.logger import get_logger
from src.tensor import Metric4

Box = Tuple[Tuple[float, float], ...]
Coordinates = Tuple[Jet, ...]
FieldBuilder = Callable[[Coordinates], Tuple[Jet, Jet]]
ReferenceBuilder = Callable[[Coordinates], Jet]

# Box membership slack, relative to the box width
_BOX_SLACK = 1e-12

GAUSS_LEGENDRE_NODES = 32


# ==================== Instance ====================

@dataclass(frozen=True)
class FamilyInstance:
    """
    A metric family member restricted to a coordinate box.

    Attributes:
        name: Instance label used in logs and reports
        family: Family key (orthotoric, toric, calabi_type, hirzebruch, ak_lebrun, kahler_product)
        kind: 'kahler' or 'almost_kahler'
        coordinate_names: Names of the four chart coordinates
        box: (low, high) per coordinate
        params: Family parameters as given
        builder: x -> (g, omega) jets
        references: Closed-form fields by name, each x -> jet
    """
    name: str
    family: str
    kind: str
    coordinate_names: Tuple[str, ...]
    box: Box
    params: Dict[str, Any]
    builder: FieldBuilder = field(repr=False)
    references: Dict[str, ReferenceBuilder] = field(default_factory=dict, repr=False)

    def fields(self, x: Coordinates) -> Tuple[Jet, Jet]:
        return self.builder(x)

    def check_point(self, point: Sequence[float]) -> None:
        """
        Raises:
            DomainError: If the point lies outside the validity box
        """
        if len(point) != 4:
            raise DomainError(f"{self.name}: expected 4 coordinates, got {len(point)}")
        for name, value, (low, high) in zip(self.coordinate_names, point, self.box):
            slack = _BOX_SLACK * max(1.0, high - low)
            if not low - slack <= value <= high + slack:
                raise DomainError(
                    f"{self.name}: coordinate '{name}' = {value} outside [{low}, {high}]"
                )

    def has_reference(self, name: str) -> bool:
        return name in self.references

    def reference(self, name: str, x: Coordinates) -> Jet:
        if name not in self.references:
            raise ConfigurationError(f"{self.name}: no reference field '{name}'")
        return self.references[name](x)

    def evaluate_references(self, x: Coordinates) -> Dict[str, Jet]:
        return {name: builder(x) for name, builder in self.references.items()}

    @property
    def center(self) -> Tuple[float, ...]:
        return tuple(0.5 * (low + high) for low, high in self.box)

    def corners(self) -> List[Tuple[float, ...]]:
        return [tuple(c) for c in itertools.product(*self.box)]

    @property
    def is_kahler(self) -> bool:
        return self.kind == 'kahler'


def _check_box(box: Sequence[Sequence[float]], name: str) -> Box:
    if len(box) != 4:
        raise ConfigurationError(f"{name}: box needs 4 intervals, got {len(box)}")
    result = []
    for i, interval in enumerate(box):
        if len(interval) != 2:
            raise ConfigurationError(f"{name}: box interval {i} must be [low, high]")
        low, high = float(interval[0]), float(interval[1])
        if not low < high:
            raise ConfigurationError(f"{name}: box interval {i} has low >= high ({low}, {high})")
        result.append((low, high))
    return tuple(result)


def _validate_instance(instance: FamilyInstance,
                       guard: Optional[Callable[[Tuple[float, ...]], Optional[str]]] = None) -> FamilyInstance:
    """
    Corner-plus-center sampling of the validity conditions (17 points).

    Raises:
        ConstructionError: Naming the first violating point
    """
    logger = get_logger()
    points = instance.corners() + [instance.center]
    for point in points:
        if guard is not None:
            message = guard(point)
            if message:
                raise ConstructionError(f"{instance.name}: {message} at {point}")
        try:
            g, _ = instance.fields(jets.coordinates(point, 0))
            Metric4.from_components(g)
        except (SignatureError, SingularPointError, DomainError) as e:
            raise ConstructionError(f"{instance.name}: invalid metric at {point}: {e}") from e
    logger.debug(f"{instance.name}: validity checked at {len(points)} points")
    return instance


def _symmetric(entries: Dict[Tuple[int, int], Any], space) -> Jet:
    rows = [[0.0] * 4 for _ in range(4)]
    for (i, j), value in entries.items():
        rows[i][j] = value
        rows[j][i] = value
    return jets.stack(rows, space)


def _antisymmetric(entries: Dict[Tuple[int, int], Any], space) -> Jet:
    rows = [[0.0] * 4 for _ in range(4)]
    for (i, j), value in entries.items():
        rows[i][j] = value
        rows[j][i] = -value
    return jets.stack(rows, space)


def _one_form(components: Sequence[Any], space) -> Jet:
    return jets.stack(list(components), space)


# ==================== Ortho-toric ====================

@dataclass(frozen=True)
class OrthotoricParams:
    """
    Ortho-toric profile functions F(xi), G(eta) as polynomial coefficients,
    highest degree first.

    The bi-extremal family F = k x^4 + l x^3 + A x^2 + B1 x + C1 and
    G = k x^4 + l x^3 + A x^2 + B2 x + C2 is built with ``biextremal``.
    """
    F: Tuple[float, ...]
    G: Tuple[float, ...]
    box: Box = ((1.5, 2.5), (-0.5, 0.5), (0.0, 1.0), (0.0, 1.0))
    quartic: Optional[Dict[str, float]] = None

    @classmethod
    def biextremal(cls, k: float, l: float, A: float, B1: float, B2: float,
                   C1: float, C2: float, box: Optional[Box] = None) -> 'OrthotoricParams':
        quartic = {'k': k, 'l': l, 'A': A, 'B1': B1, 'B2': B2, 'C1': C1, 'C2': C2}
        params = dict(F=(k, l, A, B1, C1), G=(k, l, A, B2, C2), quartic=quartic)
        if box is not None:
            params['box'] = tuple(tuple(b) for b in box)
        return cls(**params)


def orthotoric(p: OrthotoricParams, name: str = 'orthotoric') -> FamilyInstance:
    """
    Ortho-toric Kähler metric

        g = (xi - eta)(dxi^2/F(xi) - deta^2/G(eta))
            + F(xi)/(xi - eta) (dt + eta dz)^2 - G(eta)/(xi - eta) (dt + xi dz)^2

    with omega = dxi ^ (dt + eta dz) + deta ^ (dt + xi dz).

    Reference fields: omega_i, theta, phi (hamiltonian 2-form with trace
    sigma = xi + eta and pfaffian pi = xi eta), sigma, pi, s, kappa,
    conformal_factor, momentum_xi, momentum_eta; for quartic profiles also
    mu and p.

    Raises:
        ConstructionError: If xi > eta, F(xi) > 0, G(eta) < 0 fail on the box
    """
    box = _check_box(p.box, name)
    F, G = tuple(float(c) for c in p.F), tuple(float(c) for c in p.G)
    dF, dG = polyder(F), polyder(G)
    ddF, ddG = polyder(F, 2), polyder(G, 2)

    def build(x):
        xi, eta = x[0], x[1]
        space = xi.space
        u = xi - eta
        f, g = polyval(F, xi), polyval(G, eta)
        metric = _symmetric({
            (0, 0): u / f,
            (1, 1): -u / g,
            (2, 2): (f - g) / u,
            (2, 3): (f * eta - g * xi) / u,
            (3, 3): (f * eta * eta - g * xi * xi) / u,
        }, space)
        omega = _antisymmetric({(0, 2): 1.0, (0, 3): eta, (1, 2): 1.0, (1, 3): xi}, space)
        return metric, omega

    def omega_i(x):
        xi, eta = x[0], x[1]
        return _antisymmetric({(0, 2): 1.0, (0, 3): eta, (1, 2): -1.0, (1, 3): -xi}, xi.space)

    def phi(x):
        xi, eta = x[0], x[1]
        _, omega = build(x)
        return omega_i(x) * ((xi - eta) * 0.5) + omega * ((xi + eta) * 1.5)

    def scalar(x):
        xi, eta = x[0], x[1]
        return (polyval(ddF, xi) - polyval(ddG, eta)) / (xi - eta) * (-1.0 / 6.0)

    def kappa(x):
        xi, eta = x[0], x[1]
        u = xi - eta
        first = (polyval(dF, xi) + polyval(dG, eta)) / (u * u)
        second = (polyval(F, xi) - polyval(G, eta)) / (u * u * u) * 2.0
        return scalar(x) + first - second

    def theta(x):
        xi, eta = x[0], x[1]
        inv = 1.0 / (xi - eta)
        return _one_form([-inv, inv, 0.0, 0.0], xi.space)

    references = {
        'omega_i': omega_i,
        'theta': theta,
        'phi': phi,
        'sigma': lambda x: x[0] + x[1],
        'pi': lambda x: x[0] * x[1],
        's': scalar,
        'kappa': kappa,
        'conformal_factor': lambda x: x[0] - x[1],
        'momentum_xi': lambda x: x[0] + 0.0,
        'momentum_eta': lambda x: x[1] + 0.0,
    }
    # mu and p pick up (B1 - B2) terms off the bi-extremal locus; no reference there
    if p.quartic is not None and float(p.quartic['B1']) == float(p.quartic['B2']):
        k = float(p.quartic['k'])
        references['mu'] = lambda x: (x[0] - x[1]) * (-k)
        references['p'] = lambda x: scalar(x) * scalar(x) * 0.25 - (x[0] - x[1]) * (x[0] - x[1]) * (k * k)

    params = {'F': list(F), 'G': list(G)}
    if p.quartic is not None:
        params.update({key: float(v) for key, v in p.quartic.items()})

    instance = FamilyInstance(
        name=name, family='orthotoric', kind='kahler',
        coordinate_names=('xi', 'eta', 't', 'z'), box=box, params=params,
        builder=build, references=references,
    )

    def guard(point):
        xi, eta = point[0], point[1]
        if xi <= eta:
            return f"xi = {xi} is not above eta = {eta}"
        if polyval(F, xi) <= 0.0:
            return f"F(xi) = {polyval(F, xi):.6g} is not positive"
        if polyval(G, eta) >= 0.0:
            return f"G(eta) = {polyval(G, eta):.6g} is not negative"
        return None

    return _validate_instance(instance, guard)


# ==================== Toric ====================

MatrixBuilder = Callable[[Jet, Jet], List[List[Any]]]


def toric(G: MatrixBuilder, box: Box, name: str = 'toric',
          params: Optional[Dict[str, Any]] = None) -> FamilyInstance:
    """
    Toric almost-Kähler metric sum G_ij dx_i dx_j + sum G^ij dt_i dt_j with
    omega = dx1 ^ dt1 + dx2 ^ dt2.

    The structure is Kähler exactly when G is a Hessian, i.e. d_k G_ij is
    totally symmetric; this is tested at the box center and sets ``kind``.

    Args:
        G: (x1, x2) jets -> 2x2 nested list of jets or numbers (symmetric)

    Raises:
        ConstructionError: If G is not positive definite on the box
    """
    logger = get_logger()
    box = _check_box(box, name)

    def build(x):
        space = x[0].space
        block = jets.stack(G(x[0], x[1]), space)
        inv = jets.inverse(block)
        rows = [[0.0] * 4 for _ in range(4)]
        for i in range(2):
            for j in range(2):
                rows[i][j] = block[i, j]
                rows[2 + i][2 + j] = inv[i, j]
        metric = jets.stack(rows, space)
        omega = _antisymmetric({(0, 2): 1.0, (1, 3): 1.0}, space)
        return metric, omega

    center = jets.coordinates(tuple(0.5 * (lo + hi) for lo, hi in box), 1)
    dG = jets.gradient(jets.stack(G(center[0], center[1]), center[0].space)).value
    hessian_defect = max(abs(dG[0, 0, 1] - dG[1, 0, 0]), abs(dG[0, 1, 1] - dG[1, 0, 1]))
    kind = 'kahler' if hessian_defect <= 1e-12 else 'almost_kahler'
    logger.debug(f"{name}: Hessian defect of G at center {hessian_defect:.3e} -> {kind}")

    instance = FamilyInstance(
        name=name, family='toric', kind=kind,
        coordinate_names=('x1', 'x2', 't1', 't2'), box=box,
        params=dict(params or {}, hessian=kind == 'kahler'),
        builder=build,
    )

    def guard(point):
        values = np.array([[float(v.value) if isinstance(v, Jet) else float(v) for v in row]
                           for row in G(*jets.coordinates(point, 0)[:2])])
        if values[0, 0] <= 0.0 or np.linalg.det(values) <= 0.0:
            return "G is not positive definite"
        return None

    return _validate_instance(instance, guard)


TORIC_PRESETS: Dict[str, MatrixBuilder] = {
    'quadratic': lambda x1, x2: [[1.0, 0.0], [0.0, 1.0]],
    'nonhessian': lambda x1, x2: [[1.0, 0.0], [0.0, x1 + 1.0]],
}


def toric_preset(preset: str, box: Box, name: Optional[str] = None) -> FamilyInstance:
    if preset not in TORIC_PRESETS:
        raise ConfigurationError(f"Unknown toric preset '{preset}' (known: {sorted(TORIC_PRESETS)})")
    return toric(TORIC_PRESETS[preset], box, name=name or f"toric-{preset}", params={'preset': preset})


def orthotoric_as_toric(p: OrthotoricParams, box: Optional[Box] = None,
                        name: str = 'orthotoric-toric') -> FamilyInstance:
    """
    The ortho-toric metric in momentum coordinates x1 = xi + eta, x2 = xi eta.

    The default box is the image box of the central tenth of the ortho-toric box.
    """
    F, G = tuple(float(c) for c in p.F), tuple(float(c) for c in p.G)

    def momentum_matrix(x1, x2):
        root = jets.sqrt(x1 * x1 - x2 * 4.0)
        xi, eta = (x1 + root) * 0.5, (x1 - root) * 0.5
        u = xi - eta
        f, g = polyval(F, xi), polyval(G, eta)
        g11 = (xi * xi / f - eta * eta / g) / u
        g12 = (eta / g - xi / f) / u
        g22 = (1.0 / f - 1.0 / g) / u
        return [[g11, g12], [g12, g22]]

    if box is None:
        (xl, xh), (el, eh) = p.box[0], p.box[1]
        xc, ec = 0.5 * (xl + xh), 0.5 * (el + eh)
        xr, er = 0.05 * (xh - xl), 0.05 * (eh - el)
        images = [(a + b, a * b) for a in (xc - xr, xc + xr) for b in (ec - er, ec + er)]
        x1 = [im[0] for im in images]
        x2 = [im[1] for im in images]
        box = ((min(x1), max(x1)), (min(x2), max(x2)), tuple(p.box[2]), tuple(p.box[3]))
    return toric(momentum_matrix, box, name=name, params={'F': list(F), 'G': list(G)})


# ==================== Calabi type ====================

@dataclass(frozen=True)
class CalabiTypeParams:
    """
    Calabi-type profile V(z) over a constant curvature surface.

    Attributes:
        A1, A2, A3, A4: Profile coefficients; the z^2 coefficient is ``eps``
        eps: Curvature constant of the base chart (Gauss curvature)
        chart: 'sigma' (constant-curvature chart) or 'bianchi' (eps = 0, Nil forms)
        box: (x, y, z, t) box with z > 0 and V(z) > 0
    """
    A1: float
    A2: float
    A3: float
    A4: float
    eps: float = 1.0
    chart: str = 'sigma'
    box: Box = ((-0.3, 0.3), (-0.3, 0.3), (0.9, 1.5), (0.0, 1.0))

    @property
    def profile(self) -> ProfileCoefficients:
        return ProfileCoefficients(self.A1, self.A2, self.A3, self.A4, self.eps)


def _surface_chart(eps: float, chart: str):
    """(e, alpha_x, alpha_y) jets of g_Sigma = e (dx^2 + dy^2) with d alpha = e dx ^ dy."""
    if chart == 'bianchi':
        def surface(x, y):
            return 1.0 + 0.0 * x, 0.0 * x, x + 0.0
    else:
        def surface(x, y):
            d = (x * x + y * y) * (eps / 4.0) + 1.0
            inv = 1.0 / d
            return inv * inv, y * inv * -0.5, x * inv * 0.5
    return surface


def _check_surface(surface, box: Box, name: str, variables=(0, 1)) -> None:
    """d alpha = omega_Sigma at the box center."""
    center = jets.coordinates(tuple(0.5 * (lo + hi) for lo, hi in box), 1)
    x, y = center[variables[0]], center[variables[1]]
    e, ax, ay = surface(x, y)
    curl = jets.partial(ay, _unit(variables[0])) - jets.partial(ax, _unit(variables[1]))
    if abs(curl - float(e.value)) > 1e-12:
        raise ConstructionError(f"{name}: d alpha differs from the area form ({curl} vs {float(e.value)})")


def _unit(i: int) -> Tuple[int, ...]:
    return tuple(1 if k == i else 0 for k in range(4))


def _calabi_references(profile: ProfileCoefficients, momentum: Callable, omega_i: ReferenceBuilder,
                       theta: ReferenceBuilder) -> Dict[str, ReferenceBuilder]:
    """Closed forms for a Calabi-type metric with momentum coordinate z."""
    eps = profile.eps

    def scalar(x):
        z = momentum(x)
        return (2.0 * eps - profile.evaluate(z, 2)) / z * (1.0 / 6.0)

    def mu(x):
        z = momentum(x)
        return (profile.evaluate(z, 1) * 2.0 / z - profile.evaluate(z, 2) - 2.0 * eps) / z * 0.25

    def kappa(x):
        z = momentum(x)
        return scalar(x) + profile.evaluate(z, 1) / (z * z) - profile.evaluate(z) * 2.0 / (z * z * z)

    references = {
        'omega_i': omega_i,
        'theta': theta,
        's': scalar,
        'mu': mu,
        'kappa': kappa,
        'conformal_factor': lambda x: momentum(x) + 0.0,
        'p': lambda x: scalar(x) * scalar(x) * 0.25 - mu(x) * mu(x),
    }
    if abs(profile.A3) <= 1e-12:
        references['p_affine'] = lambda x: (scalar(x) + 0.5 * profile.A2) * (-0.5 * profile.A2)
    return references


def calabi_type(p: CalabiTypeParams, name: str = 'calabi_type') -> FamilyInstance:
    """
    Calabi-type Kähler metric g = z g_Sigma + z/V(z) dz^2 + V(z)/z (dt + alpha)^2,
    omega = z omega_Sigma + dz ^ (dt + alpha), coordinates (x, y, z, t).

    Raises:
        ConfigurationError: If chart is unknown, or 'bianchi' with eps != 0
        ConstructionError: If z <= 0 or V(z) <= 0 on the box
    """
    if p.chart not in ('sigma', 'bianchi'):
        raise ConfigurationError(f"{name}: unknown chart '{p.chart}' (sigma, bianchi)")
    if p.chart == 'bianchi' and p.eps != 0.0:
        raise ConfigurationError(f"{name}: the Bianchi chart needs eps = 0, got {p.eps}")
    box = _check_box(p.box, name)
    profile = p.profile
    surface = _surface_chart(float(p.eps), p.chart)
    _check_surface(surface, box, name)

    def parts(x):
        X, Y, z = x[0], x[1], x[2]
        e, ax, ay = surface(X, Y)
        fiber = _one_form([ax, ay, 0.0, 1.0], X.space)
        return z, e, ax, ay, fiber, profile.evaluate(z)

    def build(x):
        z, e, ax, ay, fiber, V = parts(x)
        space = z.space
        base = _symmetric({(0, 0): z * e, (1, 1): z * e, (2, 2): z / V}, space)
        metric = base + contract('i,j->ij', fiber, fiber) * (V / z)
        omega = _antisymmetric({(0, 1): z * e, (0, 2): -ax, (1, 2): -ay, (2, 3): 1.0}, space)
        return metric, omega

    def omega_i(x):
        z, e, ax, ay, _, _ = parts(x)
        return _antisymmetric({(0, 1): -(z * e), (0, 2): -ax, (1, 2): -ay, (2, 3): 1.0}, z.space)

    def theta(x):
        z = x[2]
        return _one_form([0.0, 0.0, -1.0 / z, 0.0], z.space)

    instance = FamilyInstance(
        name=name, family='calabi_type', kind='kahler',
        coordinate_names=('x', 'y', 'z', 't'), box=box,
        params={'A1': p.A1, 'A2': p.A2, 'A3': p.A3, 'A4': p.A4, 'eps': p.eps, 'chart': p.chart},
        builder=build,
        references=_calabi_references(profile, lambda x: x[2], omega_i, theta),
    )

    def guard(point):
        z = point[2]
        if z <= 0.0:
            return f"z = {z} is not positive"
        if profile.evaluate(z) <= 0.0:
            return f"V(z) = {profile.evaluate(z):.6g} is not positive"
        return None

    return _validate_instance(instance, guard)


def calabi_conformal_dual(p: CalabiTypeParams, name: str = 'calabi_dual') -> FamilyInstance:
    """
    The conformal rescaling g~ = z^-2 g with Kähler form z^-2 omega_I, again
    of Calabi type in z~ = 1/z with profile z~^4 V(1/z~).

    Reference: s = (2 eps - V~''(z~)) / (6 z~).
    """
    base = calabi_type(p, name=f"{name}-base")
    dual = p.profile.dual()

    def build(x):
        metric, _ = base.fields(x)
        scale = jets.pow_int(x[2], -2)
        return metric * scale, base.reference('omega_i', x) * scale

    def scalar(x):
        z_dual = 1.0 / x[2]
        return (2.0 * dual.eps - dual.evaluate(z_dual, 2)) / z_dual * (1.0 / 6.0)

    instance = FamilyInstance(
        name=name, family='calabi_type', kind='kahler',
        coordinate_names=base.coordinate_names, box=base.box,
        params=dict(base.params, dual=True),
        builder=build, references={'s': scalar},
    )
    return _validate_instance(instance)


# ==================== Hirzebruch ====================

@dataclass(frozen=True)
class HirzebruchParams:
    """
    Kähler class (a, b), 0 < a < b, and Hirzebruch index k.

    The instance lives in the log-radius chart (x, y, t, theta).
    """
    a: float
    b: float
    k: int = 1
    box: Box = ((-0.5, 0.5), (-0.5, 0.5), (-3.0, 3.0), (0.0, 1.0))


class ProfileSolution:
    """
    Momentum profile psi(t) solving psi psi' = V(psi).

    Closed form psi = a ((1 + 3 e^t) / (1 + e^t))^(1/2) when k = 1 and
    b^2 = 3 a^2; otherwise RK45 with dense output from psi(0) = (a + b)/2.
    Jets come from the ODE itself, so derivatives are exact either way.
    """

    def __init__(self, coefficients: ProfileCoefficients, a: float, b: float, k: int,
                 t_span: Tuple[float, float]):
        self.coefficients = coefficients
        self.a, self.b, self.k = float(a), float(b), int(k)
        self.t_span = (float(t_span[0]), float(t_span[1]))
        self.closed_form = self.k == 1 and abs(self.b * self.b - 3.0 * self.a * self.a) <= 1e-12 * self.b * self.b
        self._branches = []
        if not self.closed_form:
            self._integrate()

    def _rhs(self, psi):
        return self.coefficients.evaluate(psi) / psi

    def _integrate(self) -> None:
        logger = get_logger()
        start = 0.5 * (self.a + self.b)
        delta = 1e-3 * (self.b - self.a)
        for end in self.t_span:
            if end == 0.0:
                continue
            result = solve_ivp(lambda t, y: self._rhs(y), (0.0, end), [start],
                               method='RK45', rtol=1e-10, atol=1e-12, dense_output=True)
            if not result.success:
                raise IntegrationError(f"Profile integration to t={end} failed: {result.message}")
            low, high = float(np.min(result.y)), float(np.max(result.y))
            if low <= self.a + delta or high >= self.b - delta:
                raise IntegrationError(
                    f"Profile left ({self.a + delta}, {self.b - delta}) on [0, {end}]: range [{low}, {high}]"
                )
            self._branches.append((min(0.0, end), max(0.0, end), result.sol))
        logger.debug(f"Profile integrated on {self.t_span} with {len(self._branches)} branches")

    def value(self, t: float) -> float:
        if self.closed_form:
            e = math.exp(t)
            return self.a * math.sqrt((1.0 + 3.0 * e) / (1.0 + e))
        if t == 0.0:
            return 0.5 * (self.a + self.b)
        for low, high, sol in self._branches:
            if low <= t <= high:
                return float(sol(t)[0])
        raise DomainError(f"t = {t} outside the integrated span {self.t_span}")

    def jet(self, t: Jet, var: int) -> Jet:
        """psi as a jet in chart variable ``var`` at the value of ``t``."""
        if self.closed_form:
            e = jets.exp(t)
            return jets.sqrt((e * 3.0 + 1.0) / (e + 1.0)) * self.a
        return jets.ode_jet(self.value(float(t.value)), self._rhs, var, t.order)

    def residual(self, t: float) -> float:
        """|psi psi' - V(psi)| from a first-order jet of psi."""
        psi = self.jet(jets.seed(2, t, 1), 2)
        derivative = jets.partial(psi, _unit(2))
        return abs(float(psi.value) * derivative - self.coefficients.evaluate(float(psi.value)))


def hirzebruch_calabi(p: HirzebruchParams, name: str = 'hirzebruch'
                      ) -> Tuple[ProfileCoefficients, FamilyInstance, ProfileSolution]:
    """
    Extremal Calabi metric on F_k in the log-radius chart:

        g = psi g_Sigma + psi' (dt^2 + (dtheta + alpha)^2)
        omega = psi omega_Sigma + psi' dt ^ (dtheta + alpha)

    with psi psi' = V(psi) and the round base chart (eps = 1).

    Raises:
        ConfigurationError: If a >= b or k is not a positive integer
        IntegrationError: If psi leaves (a, b) on the t-interval
    """
    coefficients = calabi_coefficients(p.a, p.b) if p.k == 1 else hirzebruch_coefficients(p.a, p.b, p.k)
    box = _check_box(p.box, name)
    profile = ProfileSolution(coefficients, p.a, p.b, p.k, box[2])
    surface = _surface_chart(1.0, 'sigma')
    _check_surface(surface, box, name)

    def parts(x):
        X, Y, t = x[0], x[1], x[2]
        e, ax, ay = surface(X, Y)
        psi = profile.jet(t, 2)
        psi_dot = coefficients.evaluate(psi) / psi
        fiber = _one_form([ax, ay, 0.0, 1.0], X.space)
        return psi, psi_dot, e, ax, ay, fiber

    def build(x):
        psi, psi_dot, e, ax, ay, fiber = parts(x)
        space = psi.space
        base = _symmetric({(0, 0): psi * e, (1, 1): psi * e, (2, 2): psi_dot}, space)
        metric = base + contract('i,j->ij', fiber, fiber) * psi_dot
        omega = _antisymmetric({(0, 1): psi * e, (0, 2): -(psi_dot * ax),
                                (1, 2): -(psi_dot * ay), (2, 3): psi_dot}, space)
        return metric, omega

    def omega_i(x):
        psi, psi_dot, e, ax, ay, _ = parts(x)
        return _antisymmetric({(0, 1): -(psi * e), (0, 2): -(psi_dot * ax),
                               (1, 2): -(psi_dot * ay), (2, 3): psi_dot}, psi.space)

    def theta(x):
        psi, psi_dot, _, _, _, _ = parts(x)
        return _one_form([0.0, 0.0, -(psi_dot / psi), 0.0], psi.space)

    references = _calabi_references(coefficients, lambda x: profile.jet(x[2], 2), omega_i, theta)
    references['psi'] = lambda x: profile.jet(x[2], 2)

    instance = FamilyInstance(
        name=name, family='hirzebruch', kind='kahler',
        coordinate_names=('x', 'y', 't', 'theta'), box=box,
        params={'a': p.a, 'b': p.b, 'k': p.k, 'A1': coefficients.A1, 'A2': coefficients.A2,
                'A3': coefficients.A3, 'A4': coefficients.A4, 'closed_form': profile.closed_form},
        builder=build, references=references,
    )
    return coefficients, _validate_instance(instance), profile


# ==================== Almost-Kähler (LeBrun gauge) ====================

@dataclass(frozen=True)
class AKLeBrunParams:
    """
    Harmonic W(x, y) = w0 + w1 x + w2 y + w3 (x^2 - y^2) + 2 w4 x y with
    conjugate V, V + iW holomorphic; base metric e^U (dx^2 + dy^2).

    Attributes:
        w: (w0, w1, w2, w3, w4)
        U: 'liouville' (e^U = 4/(1 + x^2 + y^2)^2, round) or 'flat' (U = 0)
        beta: 'closed' or 'quadrature' (Gauss-Legendre under the integral sign)
        box: (x, y, z, t) with z > 0 and W > 0
    """
    w: Tuple[float, ...] = (2.0, 1.0, 0.0, 0.0, 0.0)
    U: str = 'liouville'
    beta: str = 'closed'
    box: Box = ((-0.5, 0.5), (-0.5, 0.5), (1.0, 2.0), (0.0, 1.0))


AK_PRESETS: Dict[str, AKLeBrunParams] = {
    'gibbons_hawking': AKLeBrunParams(w=(2.0, 1.0, 0.0, 0.0, 0.0)),
    'constant': AKLeBrunParams(w=(2.0, 0.0, 0.0, 0.0, 0.0)),
}


def _harmonic_pair(w: Sequence[float]):
    w0, w1, w2, w3, w4 = (float(c) for c in w)

    def W(x, y):
        return (x * x - y * y) * w3 + x * y * (2.0 * w4) + x * w1 + y * w2 + w0

    def V(x, y):
        return x * w2 - y * w1 - x * y * (2.0 * w3) + (x * x - y * y) * w4

    return W, V


def _conformal_factor(U: str):
    if U == 'liouville':
        def exp_u(x, y):
            d = x * x + y * y + 1.0
            return 4.0 / (d * d)
    elif U == 'flat':
        def exp_u(x, y):
            return 1.0 + 0.0 * x
    else:
        raise ConfigurationError(f"Unknown conformal factor '{U}' (liouville, flat)")
    return exp_u


def _beta_closed(w: Sequence[float], U: str):
    """P with d(P dy) = W e^U dx ^ dy, or None when no closed form is known."""
    w0, w1, w2, w3, w4 = (float(c) for c in w)
    if U == 'flat':
        def P(x, y):
            return (x * (w0 + 0.0 * y) + y * x * w2 + x * x * (0.5 * w1)
                    + (x * x * x * (1.0 / 3.0) - y * y * x) * w3 + x * x * y * w4)
        return P
    if w3 != 0.0 or w4 != 0.0:
        return None

    def P(x, y):
        a2 = y * y + 1.0
        a = jets.sqrt(a2)
        q = a2 + x * x
        integral = x / (a2 * q * 2.0) + jets.atan(x / a) / (a2 * a * 2.0)
        return integral * (y * w2 + w0) * 4.0 - (1.0 / q) * (2.0 * w1)
    return P


def _beta_quadrature(W, exp_u, nodes: int = GAUSS_LEGENDRE_NODES):
    """P(x, y) = integral_0^x W e^U ds by Gauss-Legendre on jets."""
    points, weights = np.polynomial.legendre.leggauss(nodes)

    def P(x, y):
        total = 0.0 * x
        for node, weight in zip(points, weights):
            s = x * (0.5 * (1.0 + node))
            total = total + W(s, y) * exp_u(s, y) * (0.5 * weight)
        return total * x
    return P


def ak_lebrun(p: AKLeBrunParams, name: str = 'ak_lebrun') -> FamilyInstance:
    """
    Almost-Kähler metric with J-invariant Ricci tensor:

        g = W/z (z^2 g_Sigma + dz^2) + z/W (dt + V/z dz + beta)^2
        omega = z W omega_Sigma + dz ^ (dt + V/z dz + beta)

    with beta = P dy, dP/dx = W e^U. J is integrable iff W is constant.

    Reference: s = (U_xx + U_yy + 2 e^U) / (6 z W e^U).

    Raises:
        ConfigurationError: Unknown U or beta mode, or wrong number of w
        ConstructionError: W <= 0, z <= 0, Cauchy-Riemann or d beta mismatch
    """
    if len(p.w) != 5:
        raise ConfigurationError(f"{name}: w needs 5 coefficients (w0..w4), got {len(p.w)}")
    if p.beta not in ('closed', 'quadrature'):
        raise ConfigurationError(f"{name}: unknown beta mode '{p.beta}' (closed, quadrature)")
    box = _check_box(p.box, name)
    W, V = _harmonic_pair(p.w)
    exp_u = _conformal_factor(p.U)
    P = _beta_closed(p.w, p.U) if p.beta == 'closed' else None
    if P is None:
        P = _beta_quadrature(W, exp_u)

    def build(x):
        X, Y, z = x[0], x[1], x[2]
        space = X.space
        w_val, eu, beta = W(X, Y), exp_u(X, Y), P(X, Y)
        fiber = _one_form([0.0, beta, V(X, Y) / z, 1.0], space)
        base = _symmetric({(0, 0): z * w_val * eu, (1, 1): z * w_val * eu, (2, 2): w_val / z}, space)
        metric = base + contract('i,j->ij', fiber, fiber) * (z / w_val)
        omega = _antisymmetric({(0, 1): z * w_val * eu, (1, 2): -beta, (2, 3): 1.0}, space)
        return metric, omega

    def omega_i(x):
        X, Y, z = x[0], x[1], x[2]
        return _antisymmetric({(0, 1): -(z * W(X, Y) * exp_u(X, Y)), (1, 2): -P(X, Y), (2, 3): 1.0}, X.space)

    def scalar(x):
        X, Y, z = x[0], x[1], x[2]
        eu = exp_u(X, Y)
        U = jets.log(eu)
        laplacian = jets.diff(jets.diff(U, 0), 0) + jets.diff(jets.diff(U, 1), 1)
        return (laplacian + eu * 2.0) / (z * W(X, Y) * eu * 6.0)

    kind = 'kahler' if all(float(c) == 0.0 for c in p.w[1:]) else 'almost_kahler'
    instance = FamilyInstance(
        name=name, family='ak_lebrun', kind=kind,
        coordinate_names=('x', 'y', 'z', 't'), box=box,
        params={'w': [float(c) for c in p.w], 'U': p.U, 'beta': p.beta,
                # W/z is harmonic on flat R^3 over the round base: Gibbons-Hawking
                'ricci_flat': p.U == 'liouville'},
        builder=build,
        references={
            'omega_i': omega_i,
            's': scalar,
            'conformal_factor': lambda x: x[2] + 0.0,
            'harmonic_w': lambda x: W(x[0], x[1]),
        },
    )

    # Cauchy-Riemann and d beta at the box center
    center = jets.coordinates(instance.center, 1)
    cx, cy = center[0], center[1]
    w_jet, v_jet = W(cx, cy), V(cx, cy)
    cr = max(abs(jets.partial(v_jet, _unit(0)) - jets.partial(w_jet, _unit(1))),
             abs(jets.partial(v_jet, _unit(1)) + jets.partial(w_jet, _unit(0))))
    if cr > 1e-10:
        raise ConstructionError(f"{name}: V + iW is not holomorphic (residual {cr:.3e})")
    d_beta = jets.partial(P(cx, cy), _unit(0)) - float((w_jet * exp_u(cx, cy)).value)
    if abs(d_beta) > 1e-9:
        raise ConstructionError(f"{name}: d beta differs from W omega_Sigma (residual {abs(d_beta):.3e})")

    def guard(point):
        if point[2] <= 0.0:
            return f"z = {point[2]} is not positive"
        w_value = W(point[0], point[1])
        if w_value <= 0.0:
            return f"W = {w_value:.6g} is not positive"
        return None

    return _validate_instance(instance, guard)


def ak_preset(preset: str, box: Optional[Box] = None, name: Optional[str] = None) -> FamilyInstance:
    if preset not in AK_PRESETS:
        raise ConfigurationError(f"Unknown almost-Kähler preset '{preset}' (known: {sorted(AK_PRESETS)})")
    params = AK_PRESETS[preset]
    if box is not None:
        params = AKLeBrunParams(w=params.w, U=params.U, beta=params.beta, box=tuple(tuple(b) for b in box))
    return ak_lebrun(params, name=name or f"ak-{preset}")


# ==================== Kähler product ====================

def kahler_product(k1: float, k2: float,
                   box: Box = ((-0.5, 0.5), (-0.5, 0.5), (-0.5, 0.5), (-0.5, 0.5)),
                   name: Optional[str] = None) -> FamilyInstance:
    """
    Product of two constant curvature surfaces (Gauss curvatures k1, k2),
    each in the chart (dx^2 + dy^2) / (1 + k r^2 / 4)^2.

    Reference: s = (k1 + k2)/3, mu = (k1 - k2)/2 with omega_I = omega_1 - omega_2,
    kappa = s.
    """
    name = name or f"kahler_product({k1:g},{k2:g})"
    box = _check_box(box, name)
    k1, k2 = float(k1), float(k2)

    def factors(x):
        r1 = x[0] * x[0] + x[1] * x[1]
        r2 = x[2] * x[2] + x[3] * x[3]
        d1 = r1 * (k1 / 4.0) + 1.0
        d2 = r2 * (k2 / 4.0) + 1.0
        return 1.0 / (d1 * d1), 1.0 / (d2 * d2)

    def build(x):
        e1, e2 = factors(x)
        space = x[0].space
        metric = _symmetric({(0, 0): e1, (1, 1): e1, (2, 2): e2, (3, 3): e2}, space)
        omega = _antisymmetric({(0, 1): e1, (2, 3): e2}, space)
        return metric, omega

    def omega_i(x):
        e1, e2 = factors(x)
        return _antisymmetric({(0, 1): e1, (2, 3): -e2}, x[0].space)

    s_value = (k1 + k2) / 3.0
    instance = FamilyInstance(
        name=name, family='kahler_product', kind='kahler',
        coordinate_names=('x1', 'y1', 'x2', 'y2'), box=box,
        params={'k1': k1, 'k2': k2},
        builder=build,
        references={
            'omega_i': omega_i,
            'theta': lambda x: jets.zeros((4,), x[0].space),
            's': lambda x: jets.constant(s_value, x[0].space),
            'mu': lambda x: jets.constant(0.5 * (k1 - k2), x[0].space),
            'kappa': lambda x: jets.constant(s_value, x[0].space),
            'conformal_factor': lambda x: jets.constant(1.0, x[0].space),
        },
    )
    return _validate_instance(instance)
