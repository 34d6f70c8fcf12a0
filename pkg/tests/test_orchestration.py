"""
Tests for the command-line front end.

Run with: pytest tests/test_orchestration.py -v
"""

import os

import pytest
import yaml

from src.logger import reset_logging
from src.orchestration import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, build_parser, main, prepare_scenario
from src.reports import load_report, read_table
from src.validator import compare_to_golden

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIO_DIR = os.path.join(ROOT, 'config', 'scenarios')
GOLDEN_DIR = os.path.join(ROOT, 'tests', 'golden')


@pytest.fixture(autouse=True)
def cleanup_logger():
    """Each main() call sets up logging afresh."""
    reset_logging()
    yield
    reset_logging()


@pytest.fixture
def scenario_file():
    def path(name):
        return os.path.join(SCENARIO_DIR, f"{name}.yaml")
    return path


def run_cli(argv):
    """Run main() and return its exit code."""
    with pytest.raises(SystemExit) as exc_info:
        main(argv)
    return exc_info.value.code


# ==================== Parser Tests ====================

def test_parser_requires_command():
    """Test that a subcommand is required."""
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_parser_verify_defaults(scenario_file):
    """Test verify defaults: no overrides, bare --golden uses the scenario."""
    args = build_parser().parse_args(['verify', scenario_file('e1_weakly_selfdual'), '--golden'])

    assert args.golden == ''
    assert args.samples is None and args.seed is None
    assert args.log_file == 'logs/kahler_lab.log'


def test_parser_no_log_file(scenario_file):
    """Test that --no-log-file clears the log file."""
    args = build_parser().parse_args(['scan', scenario_file('calabi_e2'), '--no-log-file'])
    assert args.log_file is None


def test_prepare_scenario_overrides(scenario_file):
    """Test that command-line values override the scenario file."""
    scenario, instance, tol = prepare_scenario(scenario_file('e1_weakly_selfdual'),
                                               samples_per_box=16, rng_seed=5, order=None)

    assert scenario.name == 'e1_weakly_selfdual'
    assert instance.family == 'orthotoric'
    assert tol.samples_per_box == 16
    assert tol.rng_seed == 5
    assert tol.order == 4


# ==================== Table Command Tests ====================

def test_table_compact_class(tmp_path, capsys):
    """Test the coefficients of the class a = 1, b = sqrt(3) on F_1."""
    out = tmp_path / 'table.json'
    code = run_cli(['table', '1', '1.7320508075688772', '--out', str(out), '--no-log-file'])

    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "A1 = " in printed
    assert "✓ weakly_selfdual: yes" in printed
    assert "✗ selfdual: no" in printed

    report = load_report(str(out))
    assert report['source'] == 'calabi'
    assert report['coefficients']['A1'] == pytest.approx(-0.25)
    assert report['coefficients']['A4'] == pytest.approx(-0.75)


def test_table_boundary_profile(capsys):
    """Test the boundary profile with an explicit eps."""
    code = run_cli(['table', '1', '2', '--eps', '-1', '--boundary', '2', '--no-log-file'])
    assert code == EXIT_OK
    assert "Profile coefficients (boundary)" in capsys.readouterr().out


def test_table_invalid_interval():
    """Test that a > b is a configuration error."""
    assert run_cli(['table', '2', '1', '--no-log-file']) == EXIT_CONFIG


# ==================== Verify Command Tests ====================

def test_verify_e1_passes(scenario_file, tmp_path):
    """Test E1 on its box corners: every suite passes and the golden matches."""
    out = tmp_path / 'e1.verify.json'
    log_file = tmp_path / 'lab.log'
    code = run_cli(['verify', scenario_file('e1_weakly_selfdual'), '--samples', '16',
                    '--out', str(out), '--log-file', str(log_file),
                    '--golden', os.path.join(GOLDEN_DIR, 'e1_weakly_selfdual.json')])

    assert code == EXIT_OK
    report = load_report(str(out))
    assert report['verdict'] == 'pass'
    assert report['failed'] == []
    assert set(report['suites']) == {'kahler', 'weak_sd', 'extremal', 'biextremal', 'bach',
                                     'hamiltonian', 'lagrangian'}
    assert report['tolerances']['samples_per_box'] == 16
    assert log_file.exists()


def test_verify_intended_failure(scenario_file, tmp_path):
    """Test that B1 != B2 fails only the pfaffian potential check."""
    out = tmp_path / 'b1b2.verify.json'
    code = run_cli(['verify', scenario_file('orthotoric_B1_ne_B2_biextremal'), '--samples', '16',
                    '--out', str(out), '--no-log-file'])

    assert code == EXIT_FAIL
    report = load_report(str(out))
    assert report['failed'] == ['biextremal/pfaffian-holomorphic-potential']


def test_verify_writes_golden(scenario_file, tmp_path):
    """Test --write-golden followed by a comparison against it."""
    golden = tmp_path / 'product.golden.json'
    common = ['--samples', '16', '--no-log-file']
    scenario = scenario_file('kahler_product')

    assert run_cli(['verify', scenario, '--out', str(tmp_path / 'a.json'),
                    '--write-golden', str(golden)] + common) == EXIT_OK
    reset_logging()
    assert run_cli(['verify', scenario, '--out', str(tmp_path / 'b.json'),
                    '--golden', str(golden)] + common) == EXIT_OK
    assert load_report(str(golden))['verdict'] == 'pass'


def test_verify_missing_key(tmp_path):
    """Test that a scenario missing a coefficient exits with 2."""
    path = tmp_path / 'broken.yaml'
    path.write_text(yaml.safe_dump({
        'name': 'broken',
        'family': {'type': 'calabi_type', 'A1': 1, 'A2': 0, 'A3': 0},
        'suites': ['kahler'],
    }))
    assert run_cli(['verify', str(path), '--no-log-file']) == EXIT_CONFIG


def test_verify_missing_file():
    """Test that a missing scenario file exits with 2."""
    assert run_cli(['verify', 'config/scenarios/missing.yaml', '--no-log-file']) == EXIT_CONFIG


def test_verify_invalid_samples(scenario_file):
    """Test that fewer samples than corners is a configuration error."""
    assert run_cli(['verify', scenario_file('calabi_e2'), '--samples', '4', '--no-log-file']) == EXIT_CONFIG


# ==================== Scan and Classify Tests ====================

def test_scan_grid(scenario_file, tmp_path):
    """Test s = 0 and mu = 1 on a grid over S^2 x H^2."""
    out = tmp_path / 'product.scan.csv'
    code = run_cli(['scan', scenario_file('kahler_product'), '--fields', 's', 'mu',
                    '--grid', '2', '--out', str(out), '--no-log-file'])

    assert code == EXIT_OK
    rows = read_table(str(out))
    assert len(rows) == 16
    for row in rows:
        assert row['s'] == pytest.approx(0.0, abs=1e-10)
        assert row['mu'] == pytest.approx(1.0, rel=1e-9)


def test_scan_unknown_field(scenario_file):
    """Test that an unknown field exits with 2."""
    code = run_cli(['scan', scenario_file('calabi_e2'), '--fields', 's', 'torsion', '--no-log-file'])
    assert code == EXIT_CONFIG


def test_scan_grid_too_small(scenario_file):
    """Test that a one-point grid is refused."""
    assert run_cli(['scan', scenario_file('calabi_e2'), '--grid', '1', '--no-log-file']) == EXIT_CONFIG


def test_classify_einstein(scenario_file, tmp_path):
    """Test the classification report of the Kähler-Einstein instance."""
    out = tmp_path / 'einstein.classify.json'
    code = run_cli(['classify', scenario_file('orthotoric_einstein'), '--samples', '16',
                    '--out', str(out), '--no-log-file'])

    assert code == EXIT_OK
    assert load_report(str(out))['classification']['verdict'] == 'einstein'


# ==================== Golden Tests ====================

GOLDEN_SCENARIOS = sorted(os.path.splitext(name)[0] for name in os.listdir(GOLDEN_DIR)
                          if name.endswith('.json'))


@pytest.mark.parametrize('name', GOLDEN_SCENARIOS)
def test_verify_matches_golden(name, scenario_file, tmp_path):
    """Test every shipped scenario against its golden verdicts."""
    golden_path = os.path.join(GOLDEN_DIR, f"{name}.json")
    golden = load_report(golden_path)
    out = tmp_path / f"{name}.verify.json"

    code = run_cli(['verify', scenario_file(name), '--out', str(out),
                    '--golden', golden_path, '--no-log-file'])

    report = load_report(str(out))
    assert compare_to_golden(report, golden) == []
    assert code == (EXIT_OK if golden['verdict'] == 'pass' else EXIT_FAIL)
