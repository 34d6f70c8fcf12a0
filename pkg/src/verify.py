"""
Verification suites for Kähler and almost-Kähler metric families.

A suite is a named list of checks. Per-sample checks evaluate a residual
at every sample point of the instance's validity box (corners plus a
scrambled Sobol sequence); aggregate checks reduce the whole sample set
(constancy of kappa lambda^3, momentum round trip). Each check gets its
own verdict, pass / fail / not-applicable, and verdicts are never merged
into a score. Verdicts hold on the sampled domain only.

Comparison modes:
- 'max':      pass iff the largest residual is within the tolerance
- 'floor':    pass iff at least 90% of the samples reach ``nonzero_floor``
- 'constant': pass iff the relative spread is below ``constancy_tol``
"""

import functools
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from src import jets
from src.curvature import (
    CurvatureBundle,
    bach_forms,
    bach_route_residual,
    complex_structure_parallel_residual,
    conformal_scalar,
    cotton_asd_and_codiff,
    curvature_bundle,
    first_bianchi_residual,
    hamiltonian_analysis,
    hamiltonian_field,
    holomorphic_potential_residual,
    kahler_ricci_identity_residual,
    killing_residual,
    lagrangian_curvatures,
    lagrangian_spread,
    lee_form_residual,
    matsumoto_tanno_residual,
    nijenhuis,
    profile_ricci_potential,
    ricci_form_identity_residual,
    selfdual_cotton_residual,
    symplectic_residual,
    weyl_eigenform_residual,
    weyl_spectrum,
)
from src.coefficients import ProfileCoefficients, kappa_lambda_cubed
from src.errors import ConfigurationError, OrderError, PreconditionError
from src.families import (
    CalabiTypeParams,
    FamilyInstance,
    OrthotoricParams,
    calabi_conformal_dual,
    orthotoric,
)
from src.logger import get_logger
from src.tensor import tensor_norm
from src.thread_manager import evaluate_samples

SEED_ENV_VAR = 'KAHLER_LAB_SEED'
DEFAULT_SEED = 1729

PASS = 'pass'
FAIL = 'fail'
NOT_APPLICABLE = 'not-applicable'

DOMAIN_LABEL = 'on sampled domain'

SUITES = ('kahler', 'weak_sd', 'extremal', 'biextremal', 'bach',
          'hamiltonian', 'almost_kahler', 'lagrangian')
CONSTANT_EXPRESSIONS = ('kappa_lambda3', 'p_affine_in_s')
CLASSIFICATIONS = ('einstein', 'parallel-ricci-product', 'selfdual-nonconstant-s',
                   'degenerate-Wminus', 'none')

# A 'floor' check passes when this share of samples clears nonzero_floor
FLOOR_FRACTION = 0.9

# Relative size below which lambda_Ric counts as zero (same as the engine)
LAMBDA_THRESHOLD = 1e-8


# ==================== Configuration ====================

@dataclass
class ToleranceConfig:
    """
    Tolerances and sampling settings for a verification run.

    Attributes:
        identity_tol: Bound for identity residuals (relative to the curvature scale)
        zero_tol: Bound for quantities that vanish structurally (d omega, nabla omega)
        nonzero_floor: Level a quantity must reach to count as non-vanishing
        constancy_tol: Bound on the relative spread of a "constant" quantity
        samples_per_box: Sample points per validity box, corners included
        rng_seed: Seed of the scrambled Sobol sequence
        order: Jet order of the metric (2..4)
        workers: Worker threads for the per-sample fan-out
    """
    identity_tol: float = 1e-8
    zero_tol: float = 1e-9
    nonzero_floor: float = 1e-3
    constancy_tol: float = 1e-7
    samples_per_box: int = 64
    rng_seed: int = DEFAULT_SEED
    order: int = jets.MAX_ORDER
    workers: int = 1

    def __post_init__(self):
        # Check 1: Tolerances are positive
        for name in ('identity_tol', 'zero_tol', 'nonzero_floor', 'constancy_tol'):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigurationError(f"Tolerance '{name}' must be positive, got {value}")

        # Check 2: The non-vanishing floor sits above identity noise
        if self.nonzero_floor <= self.identity_tol:
            raise ConfigurationError(
                f"nonzero_floor ({self.nonzero_floor}) must exceed identity_tol ({self.identity_tol})"
            )

        # Check 3: Enough samples for the 16 box corners
        if self.samples_per_box < 16:
            raise ConfigurationError(
                f"samples_per_box must be at least 16 (box corners), got {self.samples_per_box}"
            )

        # Check 4: Jet order the curvature engine supports
        if not 2 <= self.order <= jets.MAX_ORDER:
            raise ConfigurationError(f"order must be in [2, {jets.MAX_ORDER}], got {self.order}")

        if self.workers < 1:
            raise ConfigurationError(f"workers must be at least 1, got {self.workers}")
        if self.rng_seed < 0:
            raise ConfigurationError(f"rng_seed must be non-negative, got {self.rng_seed}")

    @classmethod
    def from_env(cls, **overrides) -> 'ToleranceConfig':
        """
        Defaults, then ``KAHLER_LAB_SEED``, then explicit overrides (None skipped).

        Raises:
            ConfigurationError: If the environment seed is not an integer
        """
        values: Dict[str, Any] = {}
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None and env_seed.strip():
            try:
                values['rng_seed'] = int(env_seed)
            except ValueError:
                raise ConfigurationError(f"{SEED_ENV_VAR} must be an integer, got '{env_seed}'")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def with_overrides(self, **overrides) -> 'ToleranceConfig':
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def bound(self, key: str) -> float:
        return float(getattr(self, key))


# ==================== Reports ====================

@dataclass
class CheckReport:
    """
    Outcome of one check over the sample set.

    For 'max' and 'constant' checks the verdict is pass exactly when
    ``max_residual`` <= ``tolerance``. For 'floor' checks ``fraction`` is
    the share of samples at or above the floor.
    """
    name: str
    suite: str
    provenance: str
    verdict: str
    tolerance: float
    comparison: str = 'max'
    max_residual: Optional[float] = None
    mean_residual: Optional[float] = None
    argmax_point: Optional[Tuple[float, ...]] = None
    samples: int = 0
    not_applicable: int = 0
    fraction: Optional[float] = None
    value: Optional[Any] = None
    detail: str = ''
    domain: str = DOMAIN_LABEL

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if self.argmax_point is not None:
            data['argmax_point'] = [float(x) for x in self.argmax_point]
        if isinstance(self.value, tuple):
            data['value'] = list(self.value)
        return data


@dataclass
class SuiteResult:
    """All check reports of one suite run on one instance."""
    instance: str
    suite: str
    reports: List[CheckReport]
    samples: int
    applicable: bool = True

    @property
    def failed_checks(self) -> List[str]:
        return [r.name for r in self.reports if r.verdict == FAIL]

    @property
    def passed(self) -> bool:
        """No failing member; not-applicable members do not fail a suite."""
        return not self.failed_checks

    def counts(self) -> Dict[str, int]:
        counts = {PASS: 0, FAIL: 0, NOT_APPLICABLE: 0}
        for report in self.reports:
            counts[report.verdict] += 1
        return counts

    def report(self, name: str) -> CheckReport:
        for report in self.reports:
            if report.name == name:
                return report
        raise ConfigurationError(f"Suite '{self.suite}' has no check '{name}'")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'instance': self.instance,
            'suite': self.suite,
            'samples': self.samples,
            'applicable': self.applicable,
            'checks': [r.to_dict() for r in self.reports],
        }


# ==================== Sampling ====================

def sample_points(instance: FamilyInstance, tol: ToleranceConfig) -> List[Tuple[float, ...]]:
    """
    The 16 box corners followed by scrambled Sobol points inside the box.

    The Sobol sequence is seeded with ``tol.rng_seed``; a larger sample
    count extends the same sequence, so earlier points are kept.
    """
    points = instance.corners()
    extra = tol.samples_per_box - len(points)
    if extra <= 0:
        return points[:tol.samples_per_box]

    sampler = qmc.Sobol(d=4, scramble=True, seed=np.random.default_rng(tol.rng_seed))
    m = max(0, math.ceil(math.log2(extra)))
    unit = sampler.random_base2(m)[:extra]
    lows = [low for low, _ in instance.box]
    highs = [high for _, high in instance.box]
    interior = qmc.scale(unit, lows, highs)
    return points + [tuple(float(v) for v in row) for row in interior]


def grid_points(instance: FamilyInstance, per_axis: int) -> List[Tuple[float, ...]]:
    """Regular grid with ``per_axis`` points on every box edge (endpoints included)."""
    if per_axis < 1:
        raise ConfigurationError(f"grid needs at least 1 point per axis, got {per_axis}")
    axes = []
    for low, high in instance.box:
        if per_axis == 1:
            axes.append([0.5 * (low + high)])
        else:
            axes.append([float(v) for v in np.linspace(low, high, per_axis)])
    mesh = np.array(np.meshgrid(*axes, indexing='ij')).reshape(4, -1).T
    return [tuple(float(v) for v in row) for row in mesh]


@dataclass
class SampleSet:
    """Curvature bundles at every sample point of one instance."""
    instance: FamilyInstance
    tolerances: ToleranceConfig
    points: List[Tuple[float, ...]]
    bundles: List[Optional[CurvatureBundle]]
    errors: Dict[int, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    def valid(self) -> List[Tuple[int, CurvatureBundle]]:
        return [(i, b) for i, b in enumerate(self.bundles) if b is not None]


def evaluate_bundles(instance: FamilyInstance, tol: ToleranceConfig,
                     points: Optional[Sequence[Sequence[float]]] = None,
                     show_progress: bool = False) -> SampleSet:
    """
    Build curvature bundles at the sample points, one task per point.

    Sample failures (e.g. a singular metric) are recorded in ``errors`` and
    make every check fail at that sample.
    """
    logger = get_logger()
    points = list(points) if points is not None else sample_points(instance, tol)
    results = evaluate_samples(points, lambda task: curvature_bundle(instance, task.point, order=tol.order),
                               max_workers=tol.workers, show_progress=show_progress,
                               desc=f"{instance.name} curvature", prefix=instance.name)

    bundles = [r.value if r.success else None for r in results]
    errors = {r.task.index: str(r.error) for r in results if not r.success}
    if errors:
        logger.warning(f"{instance.name}: {len(errors)} of {len(points)} samples failed")
    logger.debug(f"{instance.name}: {len(points) - len(errors)} bundles at order {tol.order}")
    return SampleSet(instance, tol, [tuple(p) for p in points], bundles, errors)


# ==================== Calibration ====================

@dataclass(frozen=True)
class Calibration:
    """
    Convention-dependent proportionality constants, fitted once on the
    weakly selfdual ortho-toric instance (k=1, l=A=B=0, C1=1, C2=-1).

    Attributes:
        wplus_ratio: simple eigenvalue of W+ over s on Kähler surfaces
        wminus_ratio: simple eigenvalue of W- over kappa
        bach_ratio: anti-selfdual Bach form over (d J ds)_0 + s rho0
    """
    wplus_ratio: float
    wminus_ratio: float
    bach_ratio: float


@functools.lru_cache(maxsize=None)
def calibrate_conventions() -> Calibration:
    logger = get_logger()
    params = OrthotoricParams.biextremal(k=1.0, l=0.0, A=0.0, B1=0.0, B2=0.0, C1=1.0, C2=-1.0)
    instance = orthotoric(params, name='calibration')
    bundle = curvature_bundle(instance, instance.center, order=jets.MAX_ORDER)
    s = float(bundle.s.value)
    kappa = float(bundle.kappa.value)
    calibration = Calibration(
        wplus_ratio=weyl_spectrum(bundle, 1).simple_value / s,
        wminus_ratio=weyl_spectrum(bundle, -1).simple_value / kappa,
        bach_ratio=bach_forms(bundle).constant,
    )
    logger.debug(f"Calibration: {calibration}")
    return calibration


# ==================== Per-sample checks ====================

@dataclass
class CheckContext:
    """What per-sample checks may consult besides the bundle."""
    instance: FamilyInstance
    tolerances: ToleranceConfig
    calibration: Calibration
    extras: Dict[str, Any] = field(default_factory=dict)


Evaluator = Callable[[CurvatureBundle, CheckContext, Dict[str, Any]], Optional[float]]


@dataclass(frozen=True)
class Check:
    """
    A per-sample check. ``evaluate`` returns the residual, or None where the
    check does not apply at that sample.
    """
    name: str
    provenance: str
    evaluate: Evaluator
    tolerance: str = 'identity_tol'
    comparison: Any = 'max'  # str, or instance -> str

    def comparison_for(self, instance: FamilyInstance) -> str:
        return self.comparison(instance) if callable(self.comparison) else self.comparison

    def tolerance_for(self, instance: FamilyInstance, tol: ToleranceConfig) -> float:
        if self.comparison_for(instance) == 'floor':
            return tol.nonzero_floor
        return tol.bound(self.tolerance)


def _relative(value: float, reference: float) -> float:
    return abs(value - reference) / max(1.0, abs(reference))


def _float(jet) -> float:
    return float(np.asarray(jet.value))


def _reference(bundle: CurvatureBundle, name: str):
    return bundle.references.get(name)


def _is_biextremal_orthotoric(instance: FamilyInstance) -> bool:
    params = instance.params
    return (instance.family == 'orthotoric' and 'k' in params
            and float(params['B1']) == float(params['B2']))


# Kähler structure

def _symplectic_closed(b, ctx, memo):
    return symplectic_residual(b)


def _complex_structure_parallel(b, ctx, memo):
    return complex_structure_parallel_residual(b)


def _nijenhuis(b, ctx, memo):
    return nijenhuis(b)


def _nijenhuis_mode(instance: FamilyInstance) -> str:
    return 'max' if instance.is_kahler else 'floor'


def _ricci_j_invariant(b, ctx, memo):
    return b.ricci_anti_invariant / b.scale


def _ricci_flat(b, ctx, memo):
    if not ctx.instance.params.get('ricci_flat'):
        return None
    return b.norm(b.ricci)


def _wminus_vanishes(b, ctx, memo):
    if not ctx.instance.params.get('ricci_flat'):
        return None
    return b.norm(b.weyl_minus)


def _first_bianchi(b, ctx, memo):
    return first_bianchi_residual(b) / b.scale


# Closed-form references

def _scalar_reference(b, ctx, memo):
    ref = _reference(b, 's')
    return None if ref is None else _relative(_float(b.s), _float(ref))


def _mu_reference(b, ctx, memo):
    ref = _reference(b, 'mu')
    if ref is None or b.mu is None:
        return None
    return _relative(_float(b.mu), _float(ref))


def _pfaffian_reference(b, ctx, memo):
    ref = _reference(b, 'p')
    if ref is None or b.p is None:
        return None
    return _relative(_float(b.p), _float(ref))


def _kappa_reference(b, ctx, memo):
    ref = _reference(b, 'kappa')
    if ref is None or b.kappa is None:
        return None
    return _relative(_float(b.kappa), _float(ref))


def _lee_form_reference(b, ctx, memo):
    ref = _reference(b, 'theta')
    if ref is None or b.theta is None:
        return None
    ref_value = np.asarray(ref.value, dtype=float)
    diff = np.asarray(b.theta.value, dtype=float) - ref_value
    return tensor_norm(diff, b.inverse) / max(1.0, tensor_norm(ref_value, b.inverse))


def _lee_form_equation(b, ctx, memo):
    source = b.omega_i if b.omega_i is not None else b.omega_i_ricci
    if b.theta is None or source is None:
        return None
    return lee_form_residual(source, b.theta, b.inverse)


def _conformal_routes(b, ctx, memo):
    factor = _reference(b, 'conformal_factor')
    if factor is None or b.omega_i is None:
        return None
    result = conformal_scalar(b, factor)
    return result.difference / max(1.0, abs(result.route_a))


# Curvature identities

def _ricci_form_identity(b, ctx, memo):
    return ricci_form_identity_residual(b) / b.scale


def _kahler_ricci_identity(b, ctx, memo):
    return kahler_ricci_identity_residual(b) / b.scale


def _selfdual_cotton(b, ctx, memo):
    if abs(_float(b.s)) <= ctx.tolerances.zero_tol * b.scale:
        return None
    return selfdual_cotton_residual(b) / b.scale


def _weyl_codifferential(b, ctx, memo):
    return cotton_asd_and_codiff(b)[2] / b.scale


def _wplus_degenerate(b, ctx, memo):
    return weyl_spectrum(b, 1).gap / b.scale


def _wplus_eigenform(b, ctx, memo):
    return weyl_eigenform_residual(b, 1, np.asarray(b.omega.value, dtype=float)) / b.scale


def _wplus_calibration(b, ctx, memo):
    simple = weyl_spectrum(b, 1).simple_value
    return abs(simple - ctx.calibration.wplus_ratio * _float(b.s)) / b.scale


def _conformal_dual_scalar(b, ctx, memo):
    dual = ctx.extras.get('dual')
    if dual is None:
        return None
    dual_bundle = curvature_bundle(dual, b.point, order=2)
    return _relative(_float(dual_bundle.s), _float(dual_bundle.references['s']))


def _profile_ricci_potential(b, ctx, memo):
    psi = _reference(b, 'psi')
    if psi is None or psi.order < 3:
        return None
    scal = _float(b.scal)
    return _relative(profile_ricci_potential(psi, 2), scal)


# Weak selfduality

def _cotton_asd(b, ctx, memo):
    cotton_minus, _, _ = cotton_asd_and_codiff(b)
    return tensor_norm(cotton_minus, b.inverse) / b.scale


def _matsumoto_tanno(b, ctx, memo):
    if b.rho0 is None:
        return None
    return matsumoto_tanno_residual(b) / b.scale


def _wminus_degenerate(b, ctx, memo):
    return weyl_spectrum(b, -1).gap / b.scale


def _wminus_calibration(b, ctx, memo):
    if not ctx.instance.is_kahler or b.kappa is None or 'omega_i' not in b.references:
        return None
    simple = weyl_spectrum(b, -1).simple_value
    return abs(simple - ctx.calibration.wminus_ratio * _float(b.kappa)) / b.scale


def _orthotoric_ricci_relation(b, ctx, memo):
    """rho + 2k phi + 3/2 l omega = 0 on bi-extremal ortho-toric surfaces."""
    phi = _reference(b, 'phi')
    if not _is_biextremal_orthotoric(ctx.instance) or phi is None or b.rho is None:
        return None
    k, l = float(ctx.instance.params['k']), float(ctx.instance.params['l'])
    total = (np.asarray(b.rho.value, dtype=float) + 2.0 * k * np.asarray(phi.value, dtype=float)
             + 1.5 * l * np.asarray(b.omega.value, dtype=float))
    return tensor_norm(total, b.inverse) / b.scale


# Extremality

def _scalar_potential(b, ctx, memo):
    return holomorphic_potential_residual(b, b.s) / b.scale


def _scalar_killing(b, ctx, memo):
    return killing_residual(b, hamiltonian_field(b, b.s)) / b.scale


def _pfaffian_potential(b, ctx, memo):
    if b.p is None:
        return None
    return holomorphic_potential_residual(b, b.p) / b.scale


def _pfaffian_affine(b, ctx, memo):
    ref = _reference(b, 'p_affine')
    if ref is None or b.p is None:
        return None
    return _relative(_float(b.p), _float(ref))


# Bach tensor

def _bach_routes(b, ctx, memo):
    return bach_route_residual(b) / b.scale


def _bach_form_relation(b, ctx, memo):
    if not ctx.instance.is_kahler:
        return None
    if holomorphic_potential_residual(b, b.s) > ctx.tolerances.identity_tol * b.scale:
        return None  # B is J-invariant only on extremal surfaces
    forms = bach_forms(b)
    diff = forms.bach_form - ctx.calibration.bach_ratio * forms.candidate
    return tensor_norm(diff, b.inverse) / b.scale


def _predicted_bach_flat(instance: FamilyInstance) -> Optional[bool]:
    params = instance.params
    if instance.family in ('calabi_type', 'hirzebruch') and 'A1' in params and not params.get('dual'):
        value = 4 * params['A1'] * params['A4'] - params['A2'] * params['A3']
        return abs(value) <= 1e-12
    if instance.family == 'orthotoric' and 'k' in params:
        value = (4 * params['k'] * (params['C1'] - params['C2'])
                 - (params['B1'] - params['B2']) * params['l'])
        return abs(value) <= 1e-12
    if instance.family == 'kahler_product':
        # B = s Ric0 for a product of constant curvature surfaces
        k1, k2 = params['k1'], params['k2']
        return abs((k1 + k2) * (k1 - k2)) <= 1e-12
    return None


def _bach_flat_mode(instance: FamilyInstance) -> str:
    return 'max' if _predicted_bach_flat(instance) is not False else 'floor'


def _bach_flat_criterion(b, ctx, memo):
    if _predicted_bach_flat(ctx.instance) is None or b.bach is None:
        return None
    return b.norm(b.bach) / b.scale


# Hamiltonian 2-forms

def _hamiltonian(b, memo):
    if 'hamiltonian' not in memo:
        phi = _reference(b, 'phi')
        memo['hamiltonian'] = None if phi is None else hamiltonian_analysis(b, phi)
    return memo['hamiltonian']


def _hamiltonian_field(attribute: str) -> Evaluator:
    def evaluate(b, ctx, memo):
        report = _hamiltonian(b, memo)
        return None if report is None else getattr(report, attribute)
    evaluate.__name__ = f"_hamiltonian_{attribute}"
    return evaluate


def _hamiltonian_pfaffian_potential(b, ctx, memo):
    pi = _reference(b, 'pi')
    return None if pi is None else holomorphic_potential_residual(b, pi)


def _hamiltonian_trace_reference(b, ctx, memo):
    report, ref = _hamiltonian(b, memo), _reference(b, 'sigma')
    if report is None or ref is None:
        return None
    return _relative(report.sigma, _float(ref))


def _hamiltonian_pfaffian_reference(b, ctx, memo):
    report, ref = _hamiltonian(b, memo), _reference(b, 'pi')
    if report is None or ref is None:
        return None
    return _relative(report.pi, _float(ref))


# Lagrangian sectional curvature

def _lagrangian_criterion(b, ctx, memo) -> bool:
    """J-invariant Ricci, W- = 0 and omega an eigenform of W+."""
    if 'criterion' not in memo:
        tol = ctx.tolerances.identity_tol
        memo['criterion'] = (
            b.ricci_anti_invariant <= tol * b.scale
            and b.norm(b.weyl_minus) <= tol * b.scale
            and _wplus_eigenform(b, ctx, memo) <= tol
        )
    return memo['criterion']


def _lagrangian(b, ctx, memo):
    if 'lagrangian' not in memo:
        rng = np.random.default_rng([ctx.tolerances.rng_seed, memo['index']])
        memo['lagrangian'] = lagrangian_spread(ctx.instance, b.point, rng=rng, bundle=b)[2]
    return memo['lagrangian']


def _lagrangian_constant(b, ctx, memo):
    if not _lagrangian_criterion(b, ctx, memo):
        return None
    return _lagrangian(b, ctx, memo) / b.scale


def _lagrangian_varies(b, ctx, memo):
    if _lagrangian_criterion(b, ctx, memo):
        return None
    return _lagrangian(b, ctx, memo)


CHECKS: Dict[str, Check] = {check.name: check for check in [
    Check('symplectic-form-closed', 'd omega = 0', _symplectic_closed, 'zero_tol'),
    Check('complex-structure-parallel', 'nabla omega = 0 (Kähler)', _complex_structure_parallel, 'zero_tol'),
    Check('nijenhuis', 'Nijenhuis tensor: zero iff J integrable', _nijenhuis, 'zero_tol', _nijenhuis_mode),
    Check('ricci-j-invariant', 'Ric(J., J.) = Ric', _ricci_j_invariant),
    Check('ricci-flat', 'Ric = 0 (Gibbons-Hawking over the round base)', _ricci_flat),
    Check('wminus-vanishes', 'W- = 0 (Gibbons-Hawking over the round base)', _wminus_vanishes),
    Check('first-bianchi', 'first Bianchi identity', _first_bianchi),
    Check('scalar-reference', 'closed-form scalar curvature', _scalar_reference),
    Check('ricci-eigenvalue-reference', 'closed-form Ricci eigenvalue mu', _mu_reference),
    Check('pfaffian-reference', 'closed-form pfaffian p of the normalized Ricci form', _pfaffian_reference),
    Check('conformal-scalar-reference', 'closed-form conformal scalar curvature kappa', _kappa_reference),
    Check('lee-form-reference', 'Lee form of omega_I: d omega_I = -2 theta ^ omega_I', _lee_form_reference),
    Check('lee-form-equation', 'd omega_I + 2 theta ^ omega_I = 0', _lee_form_equation),
    Check('conformal-scalar-routes', 'kappa via the conformal metric vs via the Lee form', _conformal_routes),
    Check('ricci-form-identity', 'nabla rho0 against C-, ds and J ds (anti-selfdual form)',
          _ricci_form_identity),
    Check('kahler-ricci-identity', 'nabla rho0 against the full Cotton-York tensor', _kahler_ricci_identity),
    Check('selfdual-cotton-identity', 'C+ = grad s W+ / s on Kähler surfaces', _selfdual_cotton),
    Check('weyl-codifferential', 'delta W- = C-', _weyl_codifferential),
    Check('wplus-degenerate', 'W+ has a double eigenvalue on Kähler surfaces', _wplus_degenerate),
    Check('omega-eigenform-of-wplus', 'omega is an eigenform of W+', _wplus_eigenform),
    Check('wplus-calibration', 'simple eigenvalue of W+ proportional to s', _wplus_calibration),
    Check('conformal-dual-scalar', 'Calabi duality: z^-2 g with omega_I has profile z^4 V(1/z)',
          _conformal_dual_scalar),
    Check('profile-ricci-potential', 'Scal = 2(v\'/psi + v\'\'/psi\') for the Calabi profile',
          _profile_ricci_potential),
    Check('cotton-asd-vanishes', 'weak selfduality: C- = 0', _cotton_asd),
    Check('matsumoto-tanno', 'rho is a hamiltonian 2-form (weakly selfdual Kähler)', _matsumoto_tanno),
    Check('wminus-degenerate', 'W- has a double eigenvalue', _wminus_degenerate),
    Check('wminus-calibration', 'simple eigenvalue of W- proportional to kappa', _wminus_calibration),
    Check('orthotoric-ricci-relation', 'rho = -2k phi - 3/2 l omega (bi-extremal ortho-toric)',
          _orthotoric_ricci_relation),
    Check('scalar-holomorphic-potential', 'extremal: s is a holomorphic potential', _scalar_potential),
    Check('scalar-killing', 'J grad s is a Killing field', _scalar_killing),
    Check('pfaffian-holomorphic-potential', 'bi-extremal: p is a holomorphic potential', _pfaffian_potential),
    Check('pfaffian-affine-in-scalar', 'p = -1/2 A2 (s + 1/2 A2) when A3 = 0', _pfaffian_affine),
    Check('bach-routes', 'Bach tensor from W, from W+ and from W-', _bach_routes),
    Check('bach-form-relation', 'anti-selfdual Bach form proportional to (d J ds)_0 + s rho0',
          _bach_form_relation),
    Check('bach-flat-criterion', 'Bach-flat iff the coefficient criterion holds', _bach_flat_criterion,
          'identity_tol', _bach_flat_mode),
    Check('phi-closed', 'd phi = 0', _hamiltonian_field('closed'), 'zero_tol'),
    Check('phi-twistor', 'phi0 is a twistor form', _hamiltonian_field('twistor')),
    Check('phi-hamiltonian', 'nabla phi0 is generated by d sigma / 2', _hamiltonian_field('hamiltonian')),
    Check('trace-holomorphic-potential', 'sigma is a holomorphic potential',
          _hamiltonian_field('trace_potential')),
    Check('pfaffian-potential-of-phi', 'pi is a holomorphic potential', _hamiltonian_pfaffian_potential),
    Check('trace-killing', 'J grad sigma is a Killing field', _hamiltonian_field('killing_trace')),
    Check('pfaffian-killing', 'J grad pi is a Killing field', _hamiltonian_field('killing_pfaffian')),
    Check('momenta-poisson-commute', 'omega(K1, K2) = 0', _hamiltonian_field('poisson'), 'zero_tol'),
    Check('momenta-orthogonal', '<d xi, d eta> = 0', _hamiltonian_field('momentum_orthogonality')),
    Check('pfaffian-differential', 'd pi from J d sigma and phi~', _hamiltonian_field('pfaffian_differential')),
    Check('lambda-swap', 'd lambda^2 = -phi0(J grad sigma)', _hamiltonian_field('lambda_swap')),
    Check('trace-conjugation', 'I d sigma = 2 J d lambda', _hamiltonian_field('trace_conjugation')),
    Check('trace-reference', 'trace of phi against the closed form', _hamiltonian_trace_reference),
    Check('pfaffian-of-phi-reference', 'pfaffian of phi against the closed form',
          _hamiltonian_pfaffian_reference),
    Check('lagrangian-constant', 'criterion holds: Lagrangian sectional curvature constant',
          _lagrangian_constant),
    Check('lagrangian-varies', 'criterion fails: Lagrangian sectional curvature varies',
          _lagrangian_varies, 'identity_tol', 'floor'),
]}


# ==================== Aggregate checks ====================

Aggregate = Callable[[SampleSet, CheckContext], Tuple[Optional[Dict[str, Any]], str]]


def _kappa_lambda_values(samples: SampleSet) -> Tuple[Optional[List[float]], str]:
    values = []
    for index, bundle in samples.valid():
        if bundle.kappa is None or bundle.lambda_ric is None:
            return None, f"kappa or lambda unavailable at sample {index}"
        if _float(bundle.lambda_ric) <= LAMBDA_THRESHOLD * bundle.scale:
            return None, f"lambda_Ric below threshold at sample {index}"
        values.append(_float(bundle.kappa) * _float(bundle.lambda_ric) ** 3)
    if not values:
        return None, "no valid samples"
    return values, ''


def _relative_spread(values: Sequence[float], floor: float) -> Tuple[float, float]:
    values = np.asarray(values, dtype=float)
    mean = float(np.mean(values))
    return mean, float(np.max(values) - np.min(values)) / max(abs(mean), floor)


def _kappa_lambda_constant(samples, ctx):
    values, reason = _kappa_lambda_values(samples)
    if values is None:
        return None, reason
    mean, spread = _relative_spread(values, ctx.tolerances.nonzero_floor)
    return {'residual': spread, 'value': mean}, ''


def _expected_kappa_lambda(instance: FamilyInstance) -> Optional[float]:
    params = instance.params
    if instance.family in ('calabi_type', 'hirzebruch') and 'A1' in params and not params.get('dual'):
        if abs(params['A3']) > 1e-12:
            return None
        profile = ProfileCoefficients(params['A1'], params['A2'], params['A3'], params['A4'])
        return -math.copysign(kappa_lambda_cubed(profile), params['A4'])
    if _is_biextremal_orthotoric(instance):
        return -2.0 * (params['C1'] - params['C2']) * abs(params['k']) ** 3
    return None


def _kappa_lambda_coefficients(samples, ctx):
    expected = _expected_kappa_lambda(ctx.instance)
    if expected is None:
        return None, "no coefficient prediction for this family"
    values, reason = _kappa_lambda_values(samples)
    if values is None:
        return None, reason
    mean = float(np.mean(values))
    residual = abs(mean - expected) / max(abs(expected), ctx.tolerances.nonzero_floor)
    return {'residual': residual, 'value': mean, 'detail': f"expected {expected!r}"}, ''


def _affine_fit_residual(target: np.ndarray, coordinate: np.ndarray) -> float:
    design = np.column_stack([coordinate, np.ones_like(coordinate)])
    coeffs, *_ = np.linalg.lstsq(design, target, rcond=None)
    return float(np.max(np.abs(design @ coeffs - target)))


def _momentum_round_trip(samples, ctx):
    """xi_rho and eta_rho are affine images of the chart coordinates xi, eta."""
    instance = ctx.instance
    if not _is_biextremal_orthotoric(instance) or float(instance.params['k']) == 0.0:
        return None, "needs a bi-extremal ortho-toric instance with k != 0"
    rows = [(b.point, b.xi_rho, b.eta_rho) for _, b in samples.valid()]
    if not rows or any(xi is None for _, xi, _ in rows):
        return None, "Ricci form eigenvalues unavailable"
    coords = np.array([p[:2] for p, _, _ in rows])
    xi_rho = np.array([_float(x) for _, x, _ in rows])
    eta_rho = np.array([_float(e) for _, _, e in rows])
    size = max(1.0, float(np.max(np.abs(xi_rho))), float(np.max(np.abs(eta_rho))))
    straight = max(_affine_fit_residual(xi_rho, coords[:, 0]), _affine_fit_residual(eta_rho, coords[:, 1]))
    swapped = max(_affine_fit_residual(xi_rho, coords[:, 1]), _affine_fit_residual(eta_rho, coords[:, 0]))
    return {'residual': min(straight, swapped) / size}, ''


@dataclass(frozen=True)
class AggregateCheck:
    name: str
    provenance: str
    reduce: Aggregate
    tolerance: str = 'constancy_tol'


AGGREGATES: Dict[str, AggregateCheck] = {check.name: check for check in [
    AggregateCheck('kappa-lambda-cubed-constant', 'kappa lambda^3 is constant (weakly selfdual)',
                   _kappa_lambda_constant),
    AggregateCheck('kappa-lambda-cubed-coefficients', 'kappa lambda^3 from the profile coefficients',
                   _kappa_lambda_coefficients),
    AggregateCheck('momentum-round-trip', 'xi, eta recovered from s and lambda_Ric',
                   _momentum_round_trip),
]}


SUITE_MEMBERS: Dict[str, List[str]] = {
    'kahler': [
        'symplectic-form-closed', 'complex-structure-parallel', 'nijenhuis', 'ricci-j-invariant',
        'first-bianchi', 'scalar-reference', 'ricci-eigenvalue-reference', 'pfaffian-reference',
        'conformal-scalar-reference', 'lee-form-reference', 'lee-form-equation',
        'conformal-scalar-routes', 'ricci-form-identity', 'kahler-ricci-identity',
        'selfdual-cotton-identity', 'wplus-degenerate', 'omega-eigenform-of-wplus',
        'wplus-calibration', 'conformal-dual-scalar', 'profile-ricci-potential',
    ],
    'weak_sd': [
        'cotton-asd-vanishes', 'weyl-codifferential', 'matsumoto-tanno', 'wminus-degenerate',
        'wminus-calibration', 'orthotoric-ricci-relation', 'kappa-lambda-cubed-constant',
        'kappa-lambda-cubed-coefficients', 'momentum-round-trip',
    ],
    'extremal': ['scalar-holomorphic-potential', 'scalar-killing'],
    'biextremal': ['scalar-holomorphic-potential', 'pfaffian-holomorphic-potential',
                   'pfaffian-affine-in-scalar'],
    'bach': ['bach-routes', 'bach-form-relation', 'bach-flat-criterion'],
    'hamiltonian': [
        'phi-closed', 'phi-twistor', 'phi-hamiltonian', 'trace-holomorphic-potential',
        'pfaffian-potential-of-phi', 'trace-killing', 'pfaffian-killing', 'momenta-poisson-commute',
        'momenta-orthogonal', 'pfaffian-differential', 'lambda-swap', 'trace-conjugation',
        'trace-reference', 'pfaffian-of-phi-reference',
    ],
    'almost_kahler': ['symplectic-form-closed', 'ricci-j-invariant', 'ricci-form-identity',
                      'scalar-killing', 'nijenhuis', 'scalar-reference', 'ricci-flat',
                      'wminus-vanishes'],
    'lagrangian': ['lagrangian-constant', 'lagrangian-varies'],
}


def _suite_precondition(suite: str, instance: FamilyInstance) -> Optional[str]:
    """Reason the suite does not apply to the instance, or None."""
    if suite in ('extremal', 'biextremal', 'lagrangian') and not instance.is_kahler:
        return f"suite '{suite}' needs a Kähler instance, '{instance.name}' is {instance.kind}"
    if suite == 'hamiltonian':
        if not instance.is_kahler:
            return f"suite 'hamiltonian' needs a Kähler instance, '{instance.name}' is {instance.kind}"
        if not instance.has_reference('phi'):
            return f"'{instance.name}' carries no candidate hamiltonian 2-form"
    return None


def _extras_for(suite: str, instance: FamilyInstance) -> Dict[str, Any]:
    extras: Dict[str, Any] = {}
    params = instance.params
    if suite == 'kahler' and instance.family == 'calabi_type' and not params.get('dual'):
        base = CalabiTypeParams(A1=params['A1'], A2=params['A2'], A3=params['A3'], A4=params['A4'],
                                eps=params['eps'], chart=params['chart'], box=instance.box)
        extras['dual'] = calabi_conformal_dual(base, name=f"{instance.name}-dual")
    return extras


# ==================== Reduction ====================

def _reduce(name: str, suite: str, provenance: str, comparison: str, tolerance: float,
            values: List[Optional[float]], points: List[Tuple[float, ...]],
            errors: Dict[int, str]) -> CheckReport:
    report = CheckReport(name=name, suite=suite, provenance=provenance, verdict=NOT_APPLICABLE,
                         tolerance=tolerance, comparison=comparison, samples=len(values))
    if errors:
        index = min(errors)
        report.verdict = FAIL
        report.detail = f"{len(errors)} samples raised; first at sample {index}: {errors[index]}"
        return report

    applicable = [(i, float(v)) for i, v in enumerate(values) if v is not None]
    report.not_applicable = len(values) - len(applicable)
    if not applicable:
        report.detail = "not applicable at any sample"
        return report

    residuals = np.array([v for _, v in applicable])
    if np.any(~np.isfinite(residuals)):
        report.verdict = FAIL
        report.detail = "non-finite residual"
        return report

    top = int(np.argmax(residuals))
    report.max_residual = float(residuals[top])
    report.mean_residual = float(np.mean(residuals))
    report.argmax_point = points[applicable[top][0]]

    if comparison == 'floor':
        report.fraction = float(np.mean(residuals >= tolerance))
        report.verdict = PASS if report.fraction >= FLOOR_FRACTION else FAIL
    else:
        report.verdict = PASS if report.max_residual <= tolerance else FAIL
    if report.not_applicable:
        report.detail = f"not applicable at {report.not_applicable} of {len(values)} samples"
    return report


def _not_applicable_reports(suite: str, instance: FamilyInstance, tol: ToleranceConfig,
                            reason: str) -> List[CheckReport]:
    reports = []
    for name in SUITE_MEMBERS[suite]:
        if name in CHECKS:
            check = CHECKS[name]
            reports.append(CheckReport(name=name, suite=suite, provenance=check.provenance,
                                       verdict=NOT_APPLICABLE, tolerance=check.tolerance_for(instance, tol),
                                       comparison=check.comparison_for(instance), detail=reason))
        else:
            check = AGGREGATES[name]
            reports.append(CheckReport(name=name, suite=suite, provenance=check.provenance,
                                       verdict=NOT_APPLICABLE, tolerance=tol.bound(check.tolerance),
                                       comparison='constant', detail=reason))
    return reports


# ==================== Suites ====================

def run_suite(instance: FamilyInstance, suite: str, tol: Optional[ToleranceConfig] = None,
              samples: Optional[SampleSet] = None,
              calibration: Optional[Calibration] = None) -> SuiteResult:
    """
    Run one named suite on an instance.

    Args:
        instance: Family instance to verify
        suite: One of SUITES
        tol: Tolerances and sampling (defaults from the environment)
        samples: Precomputed bundles, shared between suites of one run
        calibration: Convention constants (fitted on first use)

    Returns:
        SuiteResult with one CheckReport per suite member

    Raises:
        ConfigurationError: If the suite name is unknown

    Example:
        >>> inst = orthotoric(OrthotoricParams.biextremal(1, 0, 0, 0, 0, 1, -1))
        >>> result = run_suite(inst, 'weak_sd', ToleranceConfig(samples_per_box=16))
        >>> result.passed
        True
    """
    logger = get_logger()
    if suite not in SUITE_MEMBERS:
        raise ConfigurationError(f"Unknown suite '{suite}' (known: {', '.join(SUITES)})")
    tol = tol or (samples.tolerances if samples is not None else ToleranceConfig.from_env())

    reason = _suite_precondition(suite, instance)
    if reason:
        logger.warning(f"{instance.name}: {reason}; all '{suite}' checks not applicable")
        return SuiteResult(instance.name, suite, _not_applicable_reports(suite, instance, tol, reason),
                           samples=0, applicable=False)

    logger.info(f"Running suite '{suite}' on {instance.name}")
    samples = samples if samples is not None else evaluate_bundles(instance, tol)
    ctx = CheckContext(instance, tol, calibration or calibrate_conventions(), _extras_for(suite, instance))

    members = [CHECKS[name] for name in SUITE_MEMBERS[suite] if name in CHECKS]

    def evaluate_sample(task):
        bundle = samples.bundles[task.index]
        if bundle is None:
            return {check.name: ('error', samples.errors[task.index]) for check in members}
        memo: Dict[str, Any] = {'index': task.index}
        values = {}
        for check in members:
            try:
                values[check.name] = ('value', check.evaluate(bundle, ctx, memo))
            except (PreconditionError, OrderError) as e:
                logger.debug(f"{check.name} not applicable at {task.point}: {e}")
                values[check.name] = ('value', None)
            except ValueError as e:
                values[check.name] = ('error', str(e))
        return values

    results = evaluate_samples(samples.points, evaluate_sample, max_workers=tol.workers,
                               desc=f"{instance.name} {suite}", prefix=f"{instance.name}-{suite}")

    reports = []
    for name in SUITE_MEMBERS[suite]:
        if name in CHECKS:
            check = CHECKS[name]
            values, errors = [], {}
            for result in results:
                if not result.success:
                    errors[result.task.index] = str(result.error)
                    values.append(None)
                    continue
                kind, payload = result.value[name]
                if kind == 'error':
                    errors[result.task.index] = payload
                    values.append(None)
                else:
                    values.append(payload)
            report = _reduce(name, suite, check.provenance, check.comparison_for(instance),
                             check.tolerance_for(instance, tol), values, samples.points, errors)
        else:
            report = _run_aggregate(AGGREGATES[name], suite, samples, ctx)
        if report.verdict == NOT_APPLICABLE:
            logger.debug(f"{instance.name}/{suite}/{name}: not applicable ({report.detail})")
        elif report.verdict == FAIL:
            logger.error(f"{instance.name}/{suite}/{name}: FAIL max residual {report.max_residual}")
        reports.append(report)

    result = SuiteResult(instance.name, suite, reports, samples=len(samples))
    counts = result.counts()
    logger.info(f"Suite '{suite}' on {instance.name}: {counts[PASS]} passed, {counts[FAIL]} failed, "
                f"{counts[NOT_APPLICABLE]} not applicable")
    return result


def _run_aggregate(check: AggregateCheck, suite: str, samples: SampleSet, ctx: CheckContext) -> CheckReport:
    tolerance = ctx.tolerances.bound(check.tolerance)
    report = CheckReport(name=check.name, suite=suite, provenance=check.provenance,
                         verdict=NOT_APPLICABLE, tolerance=tolerance, comparison='constant',
                         samples=len(samples))
    if samples.errors:
        report.verdict = FAIL
        report.detail = f"{len(samples.errors)} samples raised"
        return report
    outcome, reason = check.reduce(samples, ctx)
    if outcome is None:
        report.detail = reason
        return report
    report.max_residual = float(outcome['residual'])
    report.value = outcome.get('value')
    report.detail = outcome.get('detail', '')
    report.verdict = PASS if np.isfinite(report.max_residual) and report.max_residual <= tolerance else FAIL
    return report


def run_suites(instance: FamilyInstance, suites: Sequence[str], tol: Optional[ToleranceConfig] = None,
               show_progress: bool = False) -> List[SuiteResult]:
    """Run several suites on one shared sample set."""
    tol = tol or ToleranceConfig.from_env()
    for suite in suites:
        if suite not in SUITE_MEMBERS:
            raise ConfigurationError(f"Unknown suite '{suite}' (known: {', '.join(SUITES)})")
    samples = evaluate_bundles(instance, tol, show_progress=show_progress)
    calibration = calibrate_conventions()
    return [run_suite(instance, suite, tol, samples=samples, calibration=calibration) for suite in suites]


# ==================== Classification ====================

@dataclass
class Classification:
    """
    Verdict of the rough classification of weakly selfdual Kähler surfaces.

    ``verdict`` is None when the predicates are mixed across samples; then
    ``ambiguous`` is set and ``detail`` names the predicate.
    """
    instance: str
    verdict: Optional[str]
    ambiguous: bool
    detail: str
    counts: Dict[str, int]
    samples: int
    domain: str = DOMAIN_LABEL

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def classify(instance: FamilyInstance, tol: Optional[ToleranceConfig] = None,
             samples: Optional[SampleSet] = None) -> Classification:
    """
    Decide which case of the weakly selfdual classification the instance is in:
    einstein (rho0 = 0), parallel-ricci-product (ds = 0), selfdual-nonconstant-s
    (W- = 0), degenerate-Wminus (W- degenerate everywhere), or none.

    Each predicate must hold at every sample or at none; a mixed predicate
    makes the result ambiguous.
    """
    logger = get_logger()
    tol = tol or (samples.tolerances if samples is not None else ToleranceConfig.from_env())
    if not instance.is_kahler:
        return Classification(instance.name, 'none', False, f"{instance.name} is not Kähler", {}, 0)

    samples = samples if samples is not None else evaluate_bundles(instance, tol)
    if samples.errors:
        return Classification(instance.name, None, True,
                              f"{len(samples.errors)} samples could not be evaluated", {}, len(samples))

    predicates: Dict[str, List[bool]] = {
        'weakly_selfdual': [], 'rho0_zero': [], 'ds_zero': [], 'wminus_zero': [], 'wminus_degenerate': [],
    }
    for _, b in samples.valid():
        bound = tol.identity_tol * b.scale
        if b.cotton_minus is None:
            raise OrderError("classify() needs bundles of order >= 3")
        predicates['weakly_selfdual'].append(b.norm(b.cotton_minus) <= bound)
        predicates['rho0_zero'].append(b.rho0 is not None and b.norm(b.rho0) <= bound)
        ds = np.asarray(jets.gradient(b.s).value, dtype=float)
        predicates['ds_zero'].append(tensor_norm(ds, b.inverse) <= bound)
        predicates['wminus_zero'].append(b.norm(b.weyl_minus) <= bound)
        predicates['wminus_degenerate'].append(weyl_spectrum(b, -1).gap <= bound)
    counts = {name: int(sum(flags)) for name, flags in predicates.items()}
    total = len(samples)

    def result(verdict, ambiguous=False, detail=''):
        logger.info(f"{instance.name}: classification {verdict if verdict else 'ambiguous'} ({DOMAIN_LABEL})")
        return Classification(instance.name, verdict, ambiguous, detail, counts, total)

    if counts['weakly_selfdual'] < total:
        return result('none', detail=f"C- vanishes at {counts['weakly_selfdual']} of {total} samples")

    for predicate, verdict in (('rho0_zero', 'einstein'), ('ds_zero', 'parallel-ricci-product'),
                               ('wminus_zero', 'selfdual-nonconstant-s'),
                               ('wminus_degenerate', 'degenerate-Wminus')):
        if counts[predicate] == total:
            return result(verdict)
        if counts[predicate] > 0:
            return result(None, True, f"'{predicate}' holds at {counts[predicate]} of {total} samples only")
    return result('none', detail="W- is not degenerate")


# ==================== Constants ====================

@dataclass
class ConstantFit:
    """
    A quantity expected to be constant (or affine) on the sampled domain.

    ``value`` is the mean for kappa_lambda3 and the pair (slope, intercept)
    of p against s for p_affine_in_s.
    """
    expression: str
    verdict: str
    value: Optional[Any]
    spread: Optional[float]
    values: List[float]
    detail: str = ''


def extract_constant(instance: FamilyInstance, expression: str, tol: Optional[ToleranceConfig] = None,
                     samples: Optional[SampleSet] = None) -> ConstantFit:
    """
    Fit a constant over the samples and report its relative spread.

    Args:
        expression: 'kappa_lambda3' (kappa lambda_Ric^3) or 'p_affine_in_s'
            (least-squares fit p = a s + b)

    Raises:
        ConfigurationError: If the expression is unknown

    Example:
        >>> fit = extract_constant(calabi_type(CalabiTypeParams(-0.25, 0, 0, -0.75)), 'kappa_lambda3')
        >>> # fit.value = 3/128
    """
    logger = get_logger()
    if expression not in CONSTANT_EXPRESSIONS:
        raise ConfigurationError(
            f"Unknown constant expression '{expression}' (known: {', '.join(CONSTANT_EXPRESSIONS)})"
        )
    tol = tol or (samples.tolerances if samples is not None else ToleranceConfig.from_env())
    samples = samples if samples is not None else evaluate_bundles(instance, tol)

    if expression == 'kappa_lambda3':
        values, reason = _kappa_lambda_values(samples)
        if values is None:
            logger.warning(f"{instance.name}: kappa lambda^3 not applicable ({reason})")
            return ConstantFit(expression, NOT_APPLICABLE, None, None, [], reason)
        mean, spread = _relative_spread(values, tol.nonzero_floor)
        verdict = PASS if spread < tol.constancy_tol else FAIL
        logger.info(f"{instance.name}: kappa lambda^3 = {mean!r} (spread {spread:.3e})")
        return ConstantFit(expression, verdict, mean, spread, values)

    pairs = [(_float(b.s), _float(b.p)) for _, b in samples.valid() if b.p is not None]
    if not pairs or len(pairs) < len(samples.valid()):
        reason = "pfaffian p unavailable (Ricci tensor not J-invariant)"
        return ConstantFit(expression, NOT_APPLICABLE, None, None, [], reason)
    s_values = np.array([s for s, _ in pairs])
    p_values = np.array([p for _, p in pairs])
    design = np.column_stack([s_values, np.ones_like(s_values)])
    coeffs, *_ = np.linalg.lstsq(design, p_values, rcond=None)
    spread = float(np.max(np.abs(design @ coeffs - p_values))) / max(1.0, float(np.max(np.abs(p_values))))
    verdict = PASS if spread < tol.constancy_tol else FAIL
    logger.info(f"{instance.name}: p = {coeffs[0]!r} s + {coeffs[1]!r} (spread {spread:.3e})")
    return ConstantFit(expression, verdict, (float(coeffs[0]), float(coeffs[1])), spread,
                       [float(p) for p in p_values])


# ==================== Scan fields ====================

def _scan_psi(b: CurvatureBundle, tol: ToleranceConfig, index: int) -> Optional[float]:
    psi = b.references.get('psi')
    return None if psi is None else _float(psi)


def _scan_lagrangian(b: CurvatureBundle, tol: ToleranceConfig, index: int) -> float:
    return float(np.ptp(lagrangian_curvatures(b, rng=np.random.default_rng([tol.rng_seed, index]))))


def _optional(jet) -> Optional[float]:
    return None if jet is None else _float(jet)


SCAN_FIELDS: Dict[str, Callable[[CurvatureBundle, ToleranceConfig, int], Optional[float]]] = {
    's': lambda b, tol, i: _float(b.s),
    'p': lambda b, tol, i: _optional(b.p),
    'mu': lambda b, tol, i: _optional(b.mu),
    'kappa': lambda b, tol, i: _optional(b.kappa),
    'lambda': lambda b, tol, i: _optional(b.lambda_ric),
    'Wminus_norm': lambda b, tol, i: b.norm(b.weyl_minus),
    'Cminus_norm': lambda b, tol, i: b.norm(b.cotton_minus),
    'bach_norm': lambda b, tol, i: b.norm(b.bach),
    'nijenhuis_norm': lambda b, tol, i: nijenhuis(b),
    'lagrangian_spread': _scan_lagrangian,
    'psi': _scan_psi,
}


def scan_fields(instance: FamilyInstance, fields: Sequence[str], tol: Optional[ToleranceConfig] = None,
                points: Optional[Sequence[Sequence[float]]] = None) -> List[List[Optional[float]]]:
    """
    Rows of (coordinates..., requested fields...) at each point.

    Fields the bundle cannot provide (order too low, Ricci not J-invariant)
    are None.

    Raises:
        ConfigurationError: On unknown field names
    """
    unknown = [f for f in fields if f not in SCAN_FIELDS]
    if unknown:
        raise ConfigurationError(f"Unknown scan field(s) {unknown} (known: {', '.join(SCAN_FIELDS)})")
    tol = tol or ToleranceConfig.from_env()
    samples = evaluate_bundles(instance, tol, points=points)
    rows = []
    for index, (point, bundle) in enumerate(zip(samples.points, samples.bundles)):
        if bundle is None:
            raise ConfigurationError(f"{instance.name}: sample {point} failed: {samples.errors[index]}")
        rows.append(list(point) + [SCAN_FIELDS[name](bundle, tol, index) for name in fields])
    return rows
