"""
Tests for scenario loading and validation.

Run with: pytest tests/test_config_loader.py -v
"""

import glob
import os

import pytest
import yaml

from src.config_loader import (
    Scenario,
    build_instance,
    load_scenario,
    load_schema,
    validate_scenario_config,
)
from src.errors import ConfigurationError
from src.verify import DEFAULT_SEED, SEED_ENV_VAR

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'config', 'scenarios')


@pytest.fixture
def base_config():
    """Minimal valid scenario that tests can modify."""
    return {
        'name': 'test_scenario',
        'family': {'type': 'orthotoric', 'k': 1, 'l': 0, 'A': 0, 'B1': 0, 'B2': 0, 'C1': 1, 'C2': -1},
        'suites': ['kahler', 'weak_sd'],
    }


@pytest.fixture
def write_scenario(tmp_path):
    def write(config, filename='scenario.yaml'):
        path = tmp_path / filename
        path.write_text(yaml.safe_dump(config))
        return str(path)
    return write


# ==================== Validation Tests ====================

# Test 1: Valid scenario
def test_validate_valid_scenario(base_config):
    """Test that a complete ortho-toric scenario passes."""
    validate_scenario_config(base_config)


# Test 2: Missing name
def test_validate_missing_name(base_config):
    """Test validation fails when 'name' is missing."""
    del base_config['name']
    with pytest.raises(ConfigurationError, match="missing required key: 'name'"):
        validate_scenario_config(base_config)


# Test 3: Missing top-level key
def test_validate_missing_suites(base_config):
    """Test validation fails when 'suites' is missing."""
    del base_config['suites']
    with pytest.raises(ConfigurationError, match="missing required key: 'suites'"):
        validate_scenario_config(base_config)


# Test 4: Unknown top-level key
def test_validate_unknown_top_level_key(base_config):
    """Test that typos at the top level are caught."""
    base_config['suite'] = ['kahler']
    with pytest.raises(ConfigurationError, match="unknown key: 'suite'"):
        validate_scenario_config(base_config)


# Test 5: Missing family parameter
def test_validate_missing_family_parameter(base_config):
    """Test that the error names the missing coefficient."""
    del base_config['family']['C2']
    with pytest.raises(ConfigurationError, match="missing required key: 'C2'"):
        validate_scenario_config(base_config)


# Test 6: Unknown family
def test_validate_unknown_family(base_config):
    """Test validation fails for an unknown family type."""
    base_config['family'] = {'type': 'bianchi', 'a': 1}
    with pytest.raises(ConfigurationError, match="unknown family type 'bianchi'"):
        validate_scenario_config(base_config)


# Test 7: Mixed parameterizations
def test_validate_mixed_parameterizations(base_config):
    """Test that quartic coefficients and explicit profiles cannot be combined."""
    base_config['family']['F'] = [1, 0, 0, 0, 1]
    with pytest.raises(ConfigurationError, match="cannot be combined"):
        validate_scenario_config(base_config)


# Test 8: Explicit profiles alone are valid
def test_validate_profile_parameterization(base_config):
    """Test the F, G alternative of the ortho-toric family."""
    base_config['family'] = {'type': 'orthotoric', 'F': [1, 0, 0, 0, 1], 'G': [1, 0, 0, 0, -1]}
    validate_scenario_config(base_config)


# Test 9: Non-numeric parameter
def test_validate_non_numeric_parameter(base_config):
    """Test that coefficients must be numbers."""
    base_config['family']['k'] = 'one'
    with pytest.raises(ConfigurationError, match="'k' must be a number"):
        validate_scenario_config(base_config)


# Test 10: Box shape
def test_validate_box_needs_four_intervals(base_config):
    """Test that the box lists one interval per coordinate."""
    base_config['family']['box'] = [[1.5, 2.5], [-0.5, 0.5], [0, 1]]
    with pytest.raises(ConfigurationError, match="4 intervals"):
        validate_scenario_config(base_config)


# Test 11: Box ordering
def test_validate_box_needs_increasing_interval(base_config):
    """Test lo < hi in every box interval."""
    base_config['family']['box'] = [[2.5, 1.5], [-0.5, 0.5], [0, 1], [0, 1]]
    with pytest.raises(ConfigurationError, match="lo < hi"):
        validate_scenario_config(base_config)


# Test 12: Unknown suite
def test_validate_unknown_suite(base_config):
    """Test validation fails for an unknown suite name."""
    base_config['suites'] = ['kahler', 'einstein']
    with pytest.raises(ConfigurationError, match="unknown suite 'einstein'"):
        validate_scenario_config(base_config)


# Test 13: Empty suites
def test_validate_empty_suites(base_config):
    """Test that at least one suite is required."""
    base_config['suites'] = []
    with pytest.raises(ConfigurationError, match="non-empty list"):
        validate_scenario_config(base_config)


# Test 14: Tolerances must be positive
def test_validate_negative_tolerance(base_config):
    """Test that tolerance overrides must be positive numbers."""
    base_config['tolerances'] = {'identity_tol': -1.0}
    with pytest.raises(ConfigurationError, match="must be a positive number"):
        validate_scenario_config(base_config)


# Test 15: Unknown tolerance key
def test_validate_unknown_tolerance_key(base_config):
    """Test that unknown keys inside a block are named with the block."""
    base_config['tolerances'] = {'ident_tol': 1.0e-8}
    with pytest.raises(ConfigurationError, match="unknown key: 'tolerances.ident_tol'"):
        validate_scenario_config(base_config)


# Test 16: Settings must be integers
def test_validate_settings_integer(base_config):
    """Test that sampling settings must be integers."""
    base_config['settings'] = {'samples_per_box': 32.5}
    with pytest.raises(ConfigurationError, match="must be an integer"):
        validate_scenario_config(base_config)


# Test 17: Not a mapping
def test_validate_not_a_mapping():
    """Test that a YAML list is not a scenario."""
    with pytest.raises(ConfigurationError, match="must be a mapping"):
        validate_scenario_config(['kahler'])


# ==================== Loading Tests ====================

def test_load_schema_default():
    """Test that the shipped schema lists every family."""
    schema = load_schema()
    assert set(schema['families']) == {'orthotoric', 'toric', 'calabi_type', 'hirzebruch',
                                       'ak_lebrun', 'kahler_product'}


def test_load_schema_missing_file(tmp_path):
    """Test that a missing schema file is reported."""
    with pytest.raises(FileNotFoundError):
        load_schema(str(tmp_path / 'missing.yaml'))


def test_load_scenario_with_valid_yaml(base_config, write_scenario):
    """Test loading a scenario from a YAML file."""
    base_config['family']['box'] = [[1.5, 2.5], [-0.5, 0.5], [0, 1], [0, 1]]
    base_config['settings'] = {'samples_per_box': 32}
    path = write_scenario(base_config)

    scenario = load_scenario(path)

    assert isinstance(scenario, Scenario)
    assert scenario.name == 'test_scenario'
    assert scenario.family == 'orthotoric'
    assert scenario.params['C2'] == -1.0
    assert scenario.box == ((1.5, 2.5), (-0.5, 0.5), (0.0, 1.0), (0.0, 1.0))
    assert scenario.suites == ['kahler', 'weak_sd']
    assert scenario.source == path


def test_load_scenario_coerces_exponent_strings(tmp_path):
    """Test that 1e-8 (read as text by YAML) becomes a float."""
    path = tmp_path / 'scenario.yaml'
    path.write_text(
        "name: coerced\n"
        "family: {type: kahler_product, k1: 1, k2: -1}\n"
        "suites: [kahler]\n"
        "tolerances:\n"
        "  identity_tol: 1e-8\n"
    )

    scenario = load_scenario(str(path))
    assert scenario.tolerances == {'identity_tol': 1e-8}


def test_load_scenario_single_suite_string(base_config, write_scenario):
    """Test that a single suite name is accepted as text."""
    base_config['suites'] = 'kahler'
    scenario = load_scenario(write_scenario(base_config))
    assert scenario.suites == ['kahler']


def test_load_scenario_file_not_found():
    """Test that a missing scenario file is reported."""
    with pytest.raises(FileNotFoundError, match="Scenario file not found"):
        load_scenario('does/not/exist.yaml')


def test_load_scenario_invalid_yaml(tmp_path):
    """Test that malformed YAML is a configuration error."""
    path = tmp_path / 'broken.yaml'
    path.write_text("name: [unclosed\n")
    with pytest.raises(ConfigurationError, match="Invalid YAML"):
        load_scenario(str(path))


# ==================== Tolerance Precedence Tests ====================

def test_tolerance_precedence(monkeypatch):
    """Test defaults < environment seed < scenario file < explicit overrides."""
    monkeypatch.setenv(SEED_ENV_VAR, '7')
    scenario = Scenario(name='s', family='kahler_product', params={'k1': 1.0, 'k2': -1.0},
                        tolerances={'identity_tol': 1e-6})

    # Test 1: Environment seed over the default
    assert scenario.tolerance_config().rng_seed == 7

    # Test 2: Scenario settings over the environment
    scenario.settings = {'seed': 11, 'samples_per_box': 32}
    tol = scenario.tolerance_config()
    assert tol.rng_seed == 11
    assert tol.samples_per_box == 32
    assert tol.identity_tol == 1e-6

    # Test 3: Overrides over the file, None skipped
    tol = scenario.tolerance_config(rng_seed=3, identity_tol=None)
    assert tol.rng_seed == 3
    assert tol.identity_tol == 1e-6


def test_tolerance_default_seed(monkeypatch):
    """Test the default seed without environment or file."""
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    scenario = Scenario(name='s', family='kahler_product', params={})
    assert scenario.tolerance_config().rng_seed == DEFAULT_SEED


# ==================== Build Instance Tests ====================

@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(SCENARIO_DIR, '*.yaml'))),
                         ids=lambda p: os.path.basename(p))
def test_shipped_scenarios_build(path):
    """Test that every shipped scenario loads and builds."""
    scenario = load_scenario(path)
    instance = build_instance(scenario)

    assert instance.name == scenario.name
    assert instance.family == scenario.family
    assert len(instance.box) == 4


def test_build_toric_scenario():
    """Test the toric family with a preset."""
    scenario = Scenario(name='toric_q', family='toric', params={'preset': 'quadratic'},
                        box=((0.5, 1.5), (0.5, 1.5), (0.0, 1.0), (0.0, 1.0)))
    instance = build_instance(scenario)
    assert instance.is_kahler


def test_build_hirzebruch_rejects_fractional_index():
    """Test that hk must be a positive integer."""
    scenario = Scenario(name='f', family='hirzebruch', params={'a': 1.0, 'b': 2.0, 'hk': 1.5})
    with pytest.raises(ConfigurationError, match="positive integer"):
        build_instance(scenario)


def test_build_unknown_family():
    """Test that an unvalidated unknown family is still refused."""
    with pytest.raises(ConfigurationError, match="unknown family type"):
        build_instance(Scenario(name='x', family='bianchi', params={}))
