"""
Scenario loading and validation.

A scenario file (YAML) names one metric family with its parameters, the
verification suites to run, and optional tolerance, sampling and output
overrides. The accepted keys are fixed in ``config/schema.yaml``.
"""

import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml

from src.errors import ConfigurationError
from src.families import (
    AKLeBrunParams,
    CalabiTypeParams,
    FamilyInstance,
    HirzebruchParams,
    OrthotoricParams,
    ak_lebrun,
    ak_preset,
    calabi_type,
    hirzebruch_calabi,
    kahler_product,
    orthotoric,
    toric_preset,
)
from src.logger import get_logger
from src.verify import ToleranceConfig

DEFAULT_SCHEMA = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                              'config', 'schema.yaml')

# Family keys holding lists of numbers
LIST_KEYS = ('F', 'G', 'w')

# Scenario 'settings' keys -> ToleranceConfig fields
SETTING_FIELDS = {
    'samples_per_box': 'samples_per_box',
    'seed': 'rng_seed',
    'order': 'order',
    'workers': 'workers',
}

Box = Tuple[Tuple[float, float], ...]


@dataclass
class Scenario:
    """
    One verification scenario.

    Attributes:
        name: Scenario identifier, used for report names
        family: Family type ('orthotoric', 'toric', 'calabi_type', 'hirzebruch',
            'ak_lebrun', 'kahler_product')
        params: Family parameters with numbers already coerced
        box: Validity box, or None for the family default
        suites: Suites to run, in order
        tolerances: Tolerance overrides
        settings: Sampling overrides (samples_per_box, seed, order, workers)
        output: Output paths (report, table, golden)
        description: Free text
        source: File the scenario was loaded from
    """
    name: str
    family: str
    params: Dict[str, Any]
    box: Optional[Box] = None
    suites: List[str] = field(default_factory=list)
    tolerances: Dict[str, float] = field(default_factory=dict)
    settings: Dict[str, int] = field(default_factory=dict)
    output: Dict[str, str] = field(default_factory=dict)
    description: str = ''
    source: Optional[str] = None

    def tolerance_config(self, **overrides) -> ToleranceConfig:
        """
        Tolerances for this scenario.

        Precedence: defaults, then the KAHLER_LAB_SEED environment variable,
        then the scenario file, then ``overrides`` (None values skipped).
        """
        values: Dict[str, Any] = dict(self.tolerances)
        for key, value in self.settings.items():
            values[SETTING_FIELDS[key]] = value
        return ToleranceConfig.from_env(**values).with_overrides(**overrides)


def load_schema(schema_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load the scenario schema.

    Raises:
        FileNotFoundError: If the schema file doesn't exist
        ConfigurationError: If the schema is not a mapping
    """
    schema_path = schema_path or DEFAULT_SCHEMA
    if not os.path.exists(schema_path):
        raise FileNotFoundError(f"Schema file not found: {schema_path}")
    with open(schema_path, 'r') as f:
        schema = yaml.safe_load(f)
    if not isinstance(schema, dict) or 'families' not in schema:
        raise ConfigurationError(f"Invalid schema file {schema_path}: expected a mapping with 'families'")
    return schema


def load_scenario(scenario_path: str, schema_path: Optional[str] = None) -> Scenario:
    """
    Load and validate a scenario file.

    Args:
        scenario_path: Path to the YAML scenario
        schema_path: Schema file (default: config/schema.yaml)

    Returns:
        Scenario

    Raises:
        FileNotFoundError: If the scenario file doesn't exist
        ConfigurationError: If the YAML is malformed or fails validation

    Example:
        >>> scenario = load_scenario('config/scenarios/e1_weakly_selfdual.yaml')
        >>> instance = build_instance(scenario)
    """
    logger = get_logger()

    if not os.path.exists(scenario_path):
        raise FileNotFoundError(f"Scenario file not found: {scenario_path}")

    logger.debug(f"Loading scenario from: {scenario_path}")
    try:
        with open(scenario_path, 'r') as f:
            config = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Invalid YAML in {scenario_path}: {e}")

    schema = load_schema(schema_path)
    validate_scenario_config(config, schema)
    scenario = _to_scenario(config, schema)
    scenario.source = scenario_path
    logger.info(f"Loaded scenario '{scenario.name}' ({scenario.family}, suites: {', '.join(scenario.suites)})")
    return scenario


def _as_number(value: Any) -> Optional[float]:
    """Float value of an int, float or numeric string (YAML reads 1e-8 as text)."""
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return None
    return None


def _pick_alternative(alternatives: Sequence[Sequence[str]], present: Sequence[str]) -> List[str]:
    """The parameterization sharing most keys with the given ones (first on ties)."""
    best = max(alternatives, key=lambda keys: sum(1 for k in keys if k in present))
    return list(best)


def validate_scenario_config(config: Any, schema: Optional[Dict[str, Any]] = None) -> None:
    """
    Validate a parsed scenario against the schema.

    Args:
        config: Parsed YAML content
        schema: Parsed schema (default: config/schema.yaml)

    Raises:
        ConfigurationError: Naming the offending key
    """
    schema = schema or load_schema()

    # Check 1: A mapping with a name
    if not isinstance(config, dict):
        raise ConfigurationError("Scenario must be a mapping of keys to values")
    name = config.get('name')
    if not isinstance(name, str) or not name.strip():
        raise ConfigurationError("Scenario missing required key: 'name'")

    # Check 2: Top-level keys
    top = schema['top_level']
    for key in top['required']:
        if key not in config:
            raise ConfigurationError(f"Scenario '{name}' missing required key: '{key}'")
    allowed = set(top['required']) | set(top.get('optional', []))
    for key in config:
        if key not in allowed:
            raise ConfigurationError(f"Scenario '{name}' has unknown key: '{key}'")

    # Check 3: Exactly one known family
    family_block = config['family']
    if not isinstance(family_block, dict):
        raise ConfigurationError(f"Scenario '{name}' key 'family' must be a mapping")
    family = family_block.get('type')
    if family is None:
        raise ConfigurationError(f"Scenario '{name}' family block missing required key: 'type'")
    if family not in schema['families']:
        raise ConfigurationError(
            f"Scenario '{name}' has unknown family type '{family}' "
            f"(known: {', '.join(schema['families'])})"
        )

    # Check 4: Family parameter keys
    family_schema = schema['families'][family]
    present = [k for k in family_block if k != 'type']
    if 'one_of' in family_schema:
        required = _pick_alternative(family_schema['one_of'], present)
        expected = {k for alternative in family_schema['one_of'] for k in alternative}
    else:
        required = list(family_schema.get('required', []))
        expected = set(required)
    for key in required:
        if key not in family_block:
            raise ConfigurationError(f"Scenario '{name}' family '{family}' missing required key: '{key}'")
    allowed = set(required) | set(family_schema.get('optional', []))
    for key in present:
        if key not in allowed:
            if key in expected:
                raise ConfigurationError(
                    f"Scenario '{name}' family '{family}' key '{key}' cannot be combined with {required}"
                )
            raise ConfigurationError(f"Scenario '{name}' family '{family}' has unknown key: '{key}'")

    # Check 5: Parameter value types
    text_keys = set(schema.get('text_keys', []))
    for key in present:
        value = family_block[key]
        if key == 'box':
            continue
        if key in text_keys:
            if not isinstance(value, str):
                raise ConfigurationError(f"Scenario '{name}' family key '{key}' must be text, got {value!r}")
        elif key in LIST_KEYS:
            if not isinstance(value, list) or not value or any(_as_number(v) is None for v in value):
                raise ConfigurationError(
                    f"Scenario '{name}' family key '{key}' must be a non-empty list of numbers, got {value!r}"
                )
        elif _as_number(value) is None:
            raise ConfigurationError(f"Scenario '{name}' family key '{key}' must be a number, got {value!r}")

    # Check 6: Box has one [lo, hi] interval per chart coordinate
    if 'box' in family_block:
        box = family_block['box']
        if not isinstance(box, list) or len(box) != 4:
            raise ConfigurationError(
                f"Scenario '{name}' key 'family.box' must list 4 intervals (one per coordinate), got {box!r}"
            )
        for i, interval in enumerate(box):
            if (not isinstance(interval, list) or len(interval) != 2
                    or any(_as_number(v) is None for v in interval)):
                raise ConfigurationError(f"Scenario '{name}' key 'family.box[{i}]' must be [lo, hi], got {interval!r}")
            lo, hi = (_as_number(v) for v in interval)
            if not lo < hi:
                raise ConfigurationError(f"Scenario '{name}' key 'family.box[{i}]' needs lo < hi, got {interval!r}")

    # Check 7: Suites
    suites = config['suites']
    if isinstance(suites, str):
        suites = [suites]
    if not isinstance(suites, list) or not suites:
        raise ConfigurationError(f"Scenario '{name}' key 'suites' must be a non-empty list")
    for suite in suites:
        if suite not in schema['suites']:
            raise ConfigurationError(
                f"Scenario '{name}' key 'suites' has unknown suite '{suite}' (known: {', '.join(schema['suites'])})"
            )

    # Check 8: Optional blocks
    for block, keys in schema['blocks'].items():
        if block not in config:
            continue
        values = config[block]
        if not isinstance(values, dict):
            raise ConfigurationError(f"Scenario '{name}' key '{block}' must be a mapping")
        for key, value in values.items():
            if key not in keys:
                raise ConfigurationError(f"Scenario '{name}' has unknown key: '{block}.{key}'")
            if block == 'tolerances':
                number = _as_number(value)
                if number is None or number <= 0:
                    raise ConfigurationError(
                        f"Scenario '{name}' key '{block}.{key}' must be a positive number, got {value!r}"
                    )
            elif block == 'settings':
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigurationError(f"Scenario '{name}' key '{block}.{key}' must be an integer, got {value!r}")
            elif not isinstance(value, str):
                raise ConfigurationError(f"Scenario '{name}' key '{block}.{key}' must be a path, got {value!r}")


def _to_scenario(config: Dict[str, Any], schema: Dict[str, Any]) -> Scenario:
    text_keys = set(schema.get('text_keys', []))
    family_block = config['family']
    params: Dict[str, Any] = {}
    for key, value in family_block.items():
        if key in ('type', 'box'):
            continue
        if key in text_keys:
            params[key] = value
        elif key in LIST_KEYS:
            params[key] = tuple(_as_number(v) for v in value)
        else:
            params[key] = _as_number(value)

    box = None
    if 'box' in family_block:
        box = tuple((_as_number(lo), _as_number(hi)) for lo, hi in family_block['box'])

    suites = config['suites']
    return Scenario(
        name=config['name'],
        family=family_block['type'],
        params=params,
        box=box,
        suites=[suites] if isinstance(suites, str) else list(suites),
        tolerances={k: _as_number(v) for k, v in (config.get('tolerances') or {}).items()},
        settings=dict(config.get('settings') or {}),
        output=dict(config.get('output') or {}),
        description=str(config.get('description', '')),
    )


def _hirzebruch_index(value: float, name: str) -> int:
    if int(value) != value or value < 1:
        raise ConfigurationError(f"Scenario '{name}' key 'family.hk' must be a positive integer, got {value}")
    return int(value)


def build_instance(scenario: Scenario) -> FamilyInstance:
    """
    Construct the family instance a scenario describes.

    Raises:
        ConfigurationError: On parameter values the family rejects
        ConstructionError: If the metric is singular or has the wrong
            signature somewhere on the box

    Example:
        >>> instance = build_instance(load_scenario('config/scenarios/calabi_e2.yaml'))
        >>> instance.family
        'calabi_type'
    """
    logger = get_logger()
    p, box, name = scenario.params, scenario.box, scenario.name
    logger.debug(f"Building {scenario.family} instance '{name}' with {p}")

    if scenario.family == 'orthotoric':
        if 'k' in p:
            params = OrthotoricParams.biextremal(p['k'], p['l'], p['A'], p['B1'], p['B2'],
                                                 p['C1'], p['C2'], box=box)
        elif box is not None:
            params = OrthotoricParams(F=p['F'], G=p['G'], box=box)
        else:
            params = OrthotoricParams(F=p['F'], G=p['G'])
        return orthotoric(params, name=name)

    if scenario.family == 'toric':
        return toric_preset(p['preset'], box, name=name)

    if scenario.family == 'calabi_type':
        values = dict(A1=p['A1'], A2=p['A2'], A3=p['A3'], A4=p['A4'])
        values.update({k: p[k] for k in ('eps', 'chart') if k in p})
        if box is not None:
            values['box'] = box
        return calabi_type(CalabiTypeParams(**values), name=name)

    if scenario.family == 'hirzebruch':
        values = dict(a=p['a'], b=p['b'], k=_hirzebruch_index(p.get('hk', 1.0), name))
        if box is not None:
            values['box'] = box
        _, instance, _ = hirzebruch_calabi(HirzebruchParams(**values), name=name)
        return instance

    if scenario.family == 'ak_lebrun':
        if 'preset' in p:
            return ak_preset(p['preset'], box, name=name)
        values = {k: p[k] for k in ('w', 'U', 'beta') if k in p}
        if box is not None:
            values['box'] = box
        return ak_lebrun(AKLeBrunParams(**values), name=name)

    if scenario.family == 'kahler_product':
        if box is not None:
            return kahler_product(p['k1'], p['k2'], box=box, name=name)
        return kahler_product(p['k1'], p['k2'], name=name)

    raise ConfigurationError(f"Scenario '{name}' has unknown family type '{scenario.family}'")
