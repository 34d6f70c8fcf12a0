"""
Tests for report and table serialization.

Run with: pytest tests/test_reports.py -v
"""

import json
import os

import numpy as np
import pytest

from src.errors import ConfigurationError
from src.reports import (
    default_output_path,
    dumps_report,
    format_number,
    format_table,
    load_report,
    normalize,
    read_table,
    write_report,
    write_table,
)


# ==================== Number Formatting Tests ====================

def test_format_number_17_digits():
    """Test that numbers carry 17 significant digits."""
    assert format_number(0.1) == '0.10000000000000001'
    assert format_number(-0.25) == '-0.25'
    assert float(format_number(1 / 3)) == 1 / 3


def test_format_number_missing():
    """Test that a missing value is written as nan."""
    assert format_number(None) == 'nan'


def test_normalize_special_values():
    """Test non-finite floats, numpy scalars, tuples and arrays."""
    data = normalize({
        'nan': float('nan'),
        'inf': np.inf,
        'neg': -np.inf,
        'np_float': np.float64(0.5),
        'np_int': np.int64(3),
        'flag': np.bool_(True),
        'point': (1.0, 2.0),
        'matrix': np.eye(2),
    })

    assert data['nan'] == 'nan'
    assert data['inf'] == 'inf'
    assert data['neg'] == '-inf'
    assert data['np_float'] == 0.5 and isinstance(data['np_float'], float)
    assert data['np_int'] == 3 and isinstance(data['np_int'], int)
    assert data['flag'] is True
    assert data['point'] == [1.0, 2.0]
    assert data['matrix'] == [[1.0, 0.0], [0.0, 1.0]]


def test_dumps_report_sorted_keys():
    """Test that keys are sorted and the text ends with a newline."""
    text = dumps_report({'zeta': 1, 'alpha': {'b': 2, 'a': float('nan')}})

    assert text.endswith('\n')
    assert text.index('"alpha"') < text.index('"zeta"')
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text)['alpha']['a'] == 'nan'


def test_dumps_report_is_deterministic():
    """Test that equal content gives equal text whatever the insertion order."""
    first = dumps_report({'b': [0.1, 0.2], 'a': 1})
    second = dumps_report({'a': 1, 'b': [0.1, 0.2]})
    assert first == second


# ==================== Report File Tests ====================

def test_write_report_atomic(tmp_path):
    """Test that the report is written and no temp file is left."""
    path = tmp_path / 'nested' / 'e1.verify.json'
    written = write_report(str(path), {'scenario': 'e1', 'verdict': 'pass'})

    assert written == str(path)
    assert path.exists()
    assert not os.path.exists(str(path) + '.tmp')
    assert load_report(str(path)) == {'scenario': 'e1', 'verdict': 'pass'}


def test_write_report_overwrites(tmp_path):
    """Test that an existing report is replaced."""
    path = str(tmp_path / 'report.json')
    write_report(path, {'verdict': 'fail'})
    write_report(path, {'verdict': 'pass'})
    assert load_report(path)['verdict'] == 'pass'


def test_load_report_missing(tmp_path):
    """Test that a missing report file is reported."""
    with pytest.raises(FileNotFoundError, match="Report file not found"):
        load_report(str(tmp_path / 'missing.json'))


def test_load_report_invalid_json(tmp_path):
    """Test that broken JSON is a configuration error."""
    path = tmp_path / 'broken.json'
    path.write_text('{"verdict": ')
    with pytest.raises(ConfigurationError, match="Invalid JSON"):
        load_report(str(path))


def test_load_report_not_an_object(tmp_path):
    """Test that a JSON list is not a report."""
    path = tmp_path / 'list.json'
    path.write_text('[1, 2]')
    with pytest.raises(ConfigurationError, match="JSON object"):
        load_report(str(path))


# ==================== Table Tests ====================

def test_format_table():
    """Test header, delimiter and missing values."""
    text = format_table(['xi', 'eta', 's'], [[2.0, 0.25, -4.5], [2.5, 0.0, None]])
    lines = text.splitlines()

    assert lines[0] == 'xi,eta,s'
    assert lines[1] == '2,0.25,-4.5'
    assert lines[2] == '2.5,0,nan'


def test_format_table_row_mismatch():
    """Test that a row with the wrong length is refused."""
    with pytest.raises(ValueError, match="Row 1 has 2 values"):
        format_table(['a', 'b', 'c'], [[1.0, 2.0, 3.0], [1.0, 2.0]])


def test_write_and_read_table(tmp_path):
    """Test that a written table reads back exactly."""
    path = str(tmp_path / 'scan.csv')
    rows = [[0.1, 1 / 3], [2.0, -1e-12]]
    write_table(path, ['t', 'psi'], rows)

    records = read_table(path)
    assert records == [{'t': 0.1, 'psi': 1 / 3}, {'t': 2.0, 'psi': -1e-12}]
    assert not os.path.exists(path + '.tmp')


def test_default_output_path():
    """Test the reports/<scenario>.<command>.<ext> layout."""
    assert default_output_path('e1', 'verify') == os.path.join('reports', 'e1.verify.json')
    assert default_output_path('e1', 'scan', 'csv', 'out') == os.path.join('out', 'e1.scan.csv')
