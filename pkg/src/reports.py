"""
Report and table serialization.

Reports are JSON, written atomically (temp file, then rename) with sorted
keys and no timestamps, so a fixed seed gives byte-identical files. Tables
are comma-delimited text with a header row; numbers carry 17 significant
digits, enough to round-trip a double.
"""

import json
import math
import os
from dataclasses import asdict
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.errors import ConfigurationError
from src.logger import get_logger

NUMBER_FORMAT = '%.17g'
DELIMITER = ','


def format_number(value: Optional[float]) -> str:
    """
    17-significant-digit text of a number; 'nan' for missing values.

    Example:
        >>> format_number(0.1)
        '0.10000000000000001'
    """
    if value is None:
        return 'nan'
    return NUMBER_FORMAT % float(value)


def normalize(data: Any) -> Any:
    """
    JSON-ready copy of ``data``.

    Floats are rounded to 17 significant digits, non-finite floats become
    the strings 'nan', 'inf', '-inf', tuples and arrays become lists, and
    numpy scalars become Python numbers.
    """
    if isinstance(data, dict):
        return {str(k): normalize(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [normalize(v) for v in data]
    if isinstance(data, np.ndarray):
        return [normalize(v) for v in data.tolist()]
    if isinstance(data, (bool, np.bool_)):
        return bool(data)
    if isinstance(data, (int, np.integer)):
        return int(data)
    if isinstance(data, (float, np.floating)):
        value = float(data)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return float(NUMBER_FORMAT % value)
    if data is None or isinstance(data, str):
        return data
    return str(data)


def _write_atomic(path: str, text: str) -> None:
    logger = get_logger()

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    temp_file = path + '.tmp'
    try:
        with open(temp_file, 'w', newline='\n') as f:
            f.write(text)
        os.replace(temp_file, path)
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        if os.path.exists(temp_file):
            try:
                os.remove(temp_file)
            except OSError:
                pass
        raise


def dumps_report(data: Dict[str, Any]) -> str:
    return json.dumps(normalize(data), indent=2, sort_keys=True, allow_nan=False) + '\n'


def write_report(report_file: str, data: Dict[str, Any]) -> str:
    """
    Save a report to JSON atomically.

    Args:
        report_file: Destination path (directories are created)
        data: Report content

    Returns:
        str: The path written

    Example:
        >>> write_report('reports/e1.verify.json', verify_report(scenario, instance, tol, results))
        'reports/e1.verify.json'
    """
    logger = get_logger()
    _write_atomic(report_file, dumps_report(data))
    logger.info(f"Report written: {report_file}")
    return report_file


def load_report(report_file: str) -> Dict[str, Any]:
    """
    Load a JSON report or golden file.

    Raises:
        FileNotFoundError: If the file doesn't exist
        ConfigurationError: If the file is not a JSON object
    """
    if not os.path.exists(report_file):
        raise FileNotFoundError(f"Report file not found: {report_file}")
    try:
        with open(report_file, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Invalid JSON in {report_file}: {e}")
    if not isinstance(data, dict):
        raise ConfigurationError(f"{report_file} must hold a JSON object")
    return data


def format_table(header: Sequence[str], rows: Sequence[Sequence[Optional[float]]],
                 delimiter: str = DELIMITER) -> str:
    """
    Delimited table text: header row, then one line per row.

    Raises:
        ValueError: If a row length differs from the header
    """
    lines = [delimiter.join(header)]
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"Row {i} has {len(row)} values, header has {len(header)} columns")
        lines.append(delimiter.join(format_number(v) for v in row))
    return '\n'.join(lines) + '\n'


def write_table(table_file: str, header: Sequence[str], rows: Sequence[Sequence[Optional[float]]],
                delimiter: str = DELIMITER) -> str:
    """
    Save a table atomically.

    Example:
        >>> write_table('reports/e1.scan.csv', ['xi', 'eta', 't', 'z', 's'], rows)
        'reports/e1.scan.csv'
    """
    logger = get_logger()
    _write_atomic(table_file, format_table(header, rows, delimiter))
    logger.info(f"Table written: {table_file} ({len(rows)} rows)")
    return table_file


def read_table(table_file: str, delimiter: str = DELIMITER) -> List[Dict[str, float]]:
    """Rows of a table written by ``write_table`` as column -> value dicts."""
    with open(table_file, 'r') as f:
        lines = [line.rstrip('\n') for line in f if line.strip()]
    header = lines[0].split(delimiter)
    return [dict(zip(header, (float(v) for v in line.split(delimiter)))) for line in lines[1:]]


def default_output_path(scenario_name: str, command: str, extension: str = 'json',
                        base_dir: str = 'reports') -> str:
    """
    Example:
        >>> default_output_path('e1_weakly_selfdual', 'verify')
        'reports/e1_weakly_selfdual.verify.json'
    """
    return os.path.join(base_dir, f"{scenario_name}.{command}.{extension}")


# ==================== Report builders ====================

def _instance_block(instance) -> Dict[str, Any]:
    return {
        'name': instance.name,
        'family': instance.family,
        'kind': instance.kind,
        'coordinates': list(instance.coordinate_names),
        'box': [list(interval) for interval in instance.box],
        'params': dict(instance.params),
    }


def verify_report(scenario_name: str, instance, tolerances, results) -> Dict[str, Any]:
    """
    Report of a verify run: one record per check, grouped by suite.

    Args:
        scenario_name: Scenario the run came from
        instance: FamilyInstance verified
        tolerances: ToleranceConfig used
        results: SuiteResult list
    """
    failed = [f"{r.suite}/{name}" for r in results for name in r.failed_checks]
    return {
        'scenario': scenario_name,
        'command': 'verify',
        'instance': _instance_block(instance),
        'tolerances': asdict(tolerances),
        'verdict': 'fail' if failed else 'pass',
        'failed': failed,
        'suites': {r.suite: r.to_dict() for r in results},
    }


def classification_report(scenario_name: str, instance, tolerances, classification) -> Dict[str, Any]:
    return {
        'scenario': scenario_name,
        'command': 'classify',
        'instance': _instance_block(instance),
        'tolerances': asdict(tolerances),
        'classification': classification.to_dict(),
    }


def coefficient_report(a: float, b: float, source: str, coefficients, flags: Dict[str, bool],
                       eps: float, k: float) -> Dict[str, Any]:
    return {
        'command': 'table',
        'source': source,
        'a': a,
        'b': b,
        'eps': eps,
        'k': k,
        'coefficients': dict(zip(('A1', 'A2', 'A3', 'A4'), coefficients.as_tuple())),
        'flags': flags,
    }
