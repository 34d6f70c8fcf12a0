"""
Tests for verification suites, classification and constant extraction.

Run with: pytest tests/test_verify.py -v
"""

import numpy as np
import pytest

from src.errors import ConfigurationError
from src.families import (
    AKLeBrunParams,
    CalabiTypeParams,
    OrthotoricParams,
    ak_lebrun,
    ak_preset,
    calabi_type,
    kahler_product,
    orthotoric,
)
from src.verify import (
    DOMAIN_LABEL,
    FAIL,
    NOT_APPLICABLE,
    PASS,
    SEED_ENV_VAR,
    SUITE_MEMBERS,
    SUITES,
    ToleranceConfig,
    calibrate_conventions,
    classify,
    extract_constant,
    grid_points,
    run_suite,
    sample_points,
    scan_fields,
)


@pytest.fixture(scope='module')
def e1():
    return orthotoric(OrthotoricParams.biextremal(1, 0, 0, 0, 0, 1, -1), name='e1')


@pytest.fixture
def corners_only():
    """Sixteen samples: the box corners."""
    return ToleranceConfig(samples_per_box=16)


# ==================== ToleranceConfig Tests ====================

def test_tolerance_defaults():
    """Test the default tolerances."""
    tol = ToleranceConfig()
    assert tol.identity_tol == 1e-8
    assert tol.nonzero_floor == 1e-3
    assert tol.samples_per_box == 64
    assert tol.order == 4


def test_tolerance_must_be_positive():
    """Test that a zero tolerance is refused."""
    with pytest.raises(ConfigurationError, match="'zero_tol' must be positive"):
        ToleranceConfig(zero_tol=0.0)


def test_floor_above_identity_tolerance():
    """Test that the non-vanishing floor must exceed identity noise."""
    with pytest.raises(ConfigurationError, match="must exceed identity_tol"):
        ToleranceConfig(identity_tol=1e-3, nonzero_floor=1e-4)


def test_samples_cover_corners():
    """Test that fewer samples than box corners are refused."""
    with pytest.raises(ConfigurationError, match="at least 16"):
        ToleranceConfig(samples_per_box=8)


def test_order_range():
    """Test that the jet order is limited to [2, 4]."""
    with pytest.raises(ConfigurationError, match="order must be in"):
        ToleranceConfig(order=5)


def test_seed_from_environment(monkeypatch):
    """Test that KAHLER_LAB_SEED sets the seed and explicit values win."""
    monkeypatch.setenv(SEED_ENV_VAR, '42')

    assert ToleranceConfig.from_env().rng_seed == 42
    assert ToleranceConfig.from_env(rng_seed=5).rng_seed == 5
    assert ToleranceConfig.from_env(rng_seed=None).rng_seed == 42


def test_seed_from_environment_not_integer(monkeypatch):
    """Test that a non-integer environment seed is a configuration error."""
    monkeypatch.setenv(SEED_ENV_VAR, 'abc')
    with pytest.raises(ConfigurationError, match="must be an integer"):
        ToleranceConfig.from_env()


def test_with_overrides_skips_none():
    """Test that None overrides keep the current values."""
    tol = ToleranceConfig(samples_per_box=32).with_overrides(samples_per_box=None, workers=2)
    assert tol.samples_per_box == 32
    assert tol.workers == 2


# ==================== Sampling Tests ====================

def test_sample_points_corners_first(e1):
    """Test that the 16 box corners come first, then interior points."""
    points = sample_points(e1, ToleranceConfig(samples_per_box=40))

    assert len(points) == 40
    assert points[:16] == e1.corners()
    for point in points[16:]:
        assert all(low <= x <= high for x, (low, high) in zip(point, e1.box))


def test_sample_points_deterministic(e1):
    """Test that the same seed gives the same points and another seed does not."""
    first = sample_points(e1, ToleranceConfig(samples_per_box=24, rng_seed=3))
    again = sample_points(e1, ToleranceConfig(samples_per_box=24, rng_seed=3))
    other = sample_points(e1, ToleranceConfig(samples_per_box=24, rng_seed=4))

    assert first == again
    assert first[16:] != other[16:]


def test_sample_points_only_corners(e1, corners_only):
    """Test that 16 samples are exactly the corners."""
    assert sample_points(e1, corners_only) == e1.corners()


def test_grid_points(e1):
    """Test grid sizes and the one-point grid at the center."""
    assert len(grid_points(e1, 2)) == 16
    assert grid_points(e1, 1) == [e1.center]
    with pytest.raises(ConfigurationError, match="at least 1 point"):
        grid_points(e1, 0)


# ==================== Suite Tests ====================

def test_weak_sd_suite_on_e1(e1, corners_only):
    """Test that E1 is weakly selfdual on its box corners."""
    result = run_suite(e1, 'weak_sd', corners_only)

    assert result.passed
    assert result.samples == 16
    assert [r.name for r in result.reports] == SUITE_MEMBERS['weak_sd']

    report = result.report('cotton-asd-vanishes')
    assert report.verdict == PASS
    assert report.max_residual <= report.tolerance
    assert report.to_dict()['domain'] == DOMAIN_LABEL

    constant = result.report('kappa-lambda-cubed-coefficients')
    assert constant.value == pytest.approx(-4.0, rel=1e-6)


def test_extremal_fails_for_non_extremal_profile(corners_only):
    """Test that quintic ortho-toric profiles are not extremal."""
    instance = orthotoric(OrthotoricParams(F=(0.1, 1.0, 0.0, 0.0, 0.0, 1.0),
                                           G=(0.1, 1.0, 0.0, 0.0, 0.0, -1.0)), name='quintic')
    result = run_suite(instance, 'extremal', corners_only)

    assert not result.passed
    assert 'scalar-holomorphic-potential' in result.failed_checks


def test_unknown_suite(e1):
    """Test that an unknown suite name is a configuration error."""
    with pytest.raises(ConfigurationError, match="Unknown suite 'einstein'"):
        run_suite(e1, 'einstein', ToleranceConfig(samples_per_box=16))


def test_kahler_suite_not_applicable_to_almost_kahler(corners_only):
    """Test that Kähler-only suites report not-applicable on an almost-Kähler instance."""
    result = run_suite(ak_preset('gibbons_hawking'), 'extremal', corners_only)

    assert not result.applicable
    assert result.passed
    assert result.counts() == {PASS: 0, FAIL: 0, NOT_APPLICABLE: len(SUITE_MEMBERS['extremal'])}
    assert "needs a Kähler instance" in result.reports[0].detail


def test_almost_kahler_suite_on_gibbons_hawking():
    """Test Ric = 0, W- = 0 and a non-integrable J on the Gibbons-Hawking preset."""
    tol = ToleranceConfig(samples_per_box=16, identity_tol=1e-6)
    result = run_suite(ak_preset('gibbons_hawking'), 'almost_kahler', tol)

    assert result.passed
    for name in ('ricci-flat', 'wminus-vanishes'):
        report = result.report(name)
        assert report.verdict == PASS
        assert report.max_residual < 1e-6
    assert result.report('nijenhuis').comparison == 'floor'
    assert result.report('nijenhuis').verdict == PASS


def test_ricci_flat_needs_round_base(corners_only):
    """Test that the flat base makes the Ricci-flat checks not applicable."""
    instance = ak_lebrun(AKLeBrunParams(U='flat'))
    result = run_suite(instance, 'almost_kahler', corners_only)

    assert result.report('ricci-flat').verdict == NOT_APPLICABLE
    assert result.report('wminus-vanishes').verdict == NOT_APPLICABLE


def test_lee_form_equation_in_kahler_suite(e1, corners_only):
    """Test that the Lee form of omega_I solves its defining equation on E1."""
    report = run_suite(e1, 'kahler', corners_only).report('lee-form-equation')
    assert report.verdict == PASS


def test_suite_names_cover_membership():
    """Test that every suite has members."""
    assert set(SUITES) == set(SUITE_MEMBERS)
    assert all(SUITE_MEMBERS[suite] for suite in SUITES)


def test_calibration_is_finite():
    """Test the convention constants fitted on E1."""
    calibration = calibrate_conventions()
    for value in (calibration.wplus_ratio, calibration.wminus_ratio, calibration.bach_ratio):
        assert np.isfinite(value)
        assert value != 0.0


# ==================== Classification Tests ====================

def test_classify_einstein(corners_only):
    """Test that k = 0 with B1 = B2 is Kähler-Einstein."""
    instance = orthotoric(OrthotoricParams.biextremal(0, 1, 1, 0, 0, 0, -1), name='einstein')
    result = classify(instance, corners_only)

    assert result.verdict == 'einstein'
    assert not result.ambiguous
    assert result.samples == 16


def test_classify_product(corners_only):
    """Test that S^2 x H^2 has parallel Ricci tensor."""
    result = classify(kahler_product(1.0, -1.0), corners_only)
    assert result.verdict == 'parallel-ricci-product'


def test_classify_almost_kahler_is_none(corners_only):
    """Test that non-Kähler instances are outside the classification."""
    result = classify(ak_preset('gibbons_hawking'), corners_only)
    assert result.verdict == 'none'
    assert result.samples == 0


# ==================== Constant Tests ====================

def test_extract_kappa_lambda_cubed(corners_only):
    """Test kappa lambda^3 = 3/128 for the F_1 profile in the class a = 1, b = sqrt(3)."""
    box = ((-0.3, 0.3), (-0.3, 0.3), (1.1, 1.6), (0.0, 1.0))
    instance = calabi_type(CalabiTypeParams(-0.25, 0.0, 0.0, -0.75, box=box), name='compact')
    fit = extract_constant(instance, 'kappa_lambda3', corners_only)

    assert fit.verdict == PASS
    assert abs(fit.value) == pytest.approx(3 / 128, rel=1e-6)
    assert fit.spread < corners_only.constancy_tol
    assert len(fit.values) == 16


def test_kappa_lambda_coefficients_for_calabi(corners_only):
    """Test that the Calabi prediction is 2 |A1|^3 |A4| signed by -A4."""
    box = ((-0.3, 0.3), (-0.3, 0.3), (1.1, 1.6), (0.0, 1.0))
    instance = calabi_type(CalabiTypeParams(-0.25, 0.0, 0.0, -0.75, box=box), name='compact')
    report = run_suite(instance, 'weak_sd', corners_only).report('kappa-lambda-cubed-coefficients')

    assert report.detail == f"expected {3 / 128!r}"
    assert abs(report.value) == pytest.approx(3 / 128, rel=1e-6)


def test_extract_constant_unknown_expression(e1):
    """Test that an unknown expression is refused before sampling."""
    with pytest.raises(ConfigurationError, match="Unknown constant expression"):
        extract_constant(e1, 'kappa_squared', ToleranceConfig(samples_per_box=16))


# ==================== Scan Tests ====================

def test_scan_fields_at_center():
    """Test s = (k1 + k2)/3 and mu = (k1 - k2)/2 at the product center."""
    instance = kahler_product(1.0, 0.5)
    rows = scan_fields(instance, ['s', 'mu'], ToleranceConfig(samples_per_box=16),
                       points=[instance.center])

    assert len(rows) == 1
    assert rows[0][:4] == list(instance.center)
    assert rows[0][4] == pytest.approx(0.5, rel=1e-9)
    assert rows[0][5] == pytest.approx(0.25, rel=1e-9)


def test_scan_fields_unknown_field(e1):
    """Test that unknown field names are refused."""
    with pytest.raises(ConfigurationError, match="Unknown scan field"):
        scan_fields(e1, ['s', 'torsion'], ToleranceConfig(samples_per_box=16))
