"""
Golden-file validation of verification reports.

A golden file lists the expected verdicts of a scenario, per suite and
optionally per check. Verdicts must match exactly. A check entry may also
carry a ``max_residual``; the report's residual must then agree with it
within a relative tolerance, floored at the check's own tolerance so that
residuals at rounding-noise level always agree.
"""

from typing import Any, Dict, List, Optional

from src.logger import get_logger
from src.reports import load_report

DEFAULT_REL_TOL = 1e-6


def _suite_verdict(suite: Dict[str, Any]) -> str:
    return 'fail' if any(c['verdict'] == 'fail' for c in suite.get('checks', [])) else 'pass'


def _residual_mismatch(name: str, actual: Dict[str, Any], expected: float, rel_tol: float) -> Optional[str]:
    value = actual.get('max_residual')
    if value is None:
        return f"{name}: expected max_residual {expected!r}, report has none"
    scale = max(abs(float(expected)), float(actual.get('tolerance') or 0.0))
    if abs(float(value) - float(expected)) > rel_tol * scale:
        return f"{name}: max_residual {value!r} differs from golden {expected!r}"
    return None


def compare_to_golden(report: Dict[str, Any], golden: Dict[str, Any],
                      rel_tol: float = DEFAULT_REL_TOL) -> List[str]:
    """
    Differences between a report and a golden file.

    Args:
        report: Report dict as written by ``reports.verify_report`` or
            ``reports.classification_report``
        golden: Expected verdicts
        rel_tol: Relative tolerance for residuals present in the golden

    Returns:
        List of mismatch descriptions (empty when the report matches)

    Example:
        >>> compare_to_golden(report, {'verdict': 'pass', 'suites': {'kahler': 'pass'}})
        []
    """
    mismatches = []

    # Check 1: Scenario name
    if 'scenario' in golden and golden['scenario'] != report.get('scenario'):
        mismatches.append(f"scenario: expected '{golden['scenario']}', got '{report.get('scenario')}'")

    # Check 2: Overall verdict
    if 'verdict' in golden and golden['verdict'] != report.get('verdict'):
        mismatches.append(f"verdict: expected {golden['verdict']}, got {report.get('verdict')}")

    # Check 3: Classification
    if 'classification' in golden:
        actual = (report.get('classification') or {}).get('verdict')
        if golden['classification'] != actual:
            mismatches.append(f"classification: expected {golden['classification']}, got {actual}")

    # Check 4: Suites and their checks
    suites = report.get('suites', {})
    for suite_name, expected in golden.get('suites', {}).items():
        if suite_name not in suites:
            mismatches.append(f"{suite_name}: suite missing from report")
            continue
        suite = suites[suite_name]
        if isinstance(expected, str):
            expected = {'verdict': expected}

        actual_verdict = _suite_verdict(suite)
        if 'verdict' in expected and expected['verdict'] != actual_verdict:
            mismatches.append(f"{suite_name}: expected {expected['verdict']}, got {actual_verdict}")

        checks = {c['name']: c for c in suite.get('checks', [])}
        for check_name, check_expected in expected.get('checks', {}).items():
            label = f"{suite_name}/{check_name}"
            if check_name not in checks:
                mismatches.append(f"{label}: check missing from report")
                continue
            actual = checks[check_name]
            if isinstance(check_expected, str):
                check_expected = {'verdict': check_expected}
            if check_expected.get('verdict', actual['verdict']) != actual['verdict']:
                mismatches.append(f"{label}: expected {check_expected['verdict']}, got {actual['verdict']}")
            if 'max_residual' in check_expected:
                message = _residual_mismatch(label, actual, check_expected['max_residual'], rel_tol)
                if message:
                    mismatches.append(message)

    return mismatches


def validate_against_golden(report: Dict[str, Any], golden_file: str,
                            rel_tol: float = DEFAULT_REL_TOL) -> bool:
    """
    Validate a report against a golden file.

    Returns:
        bool: True if validation passes

    Raises:
        FileNotFoundError: If the golden file doesn't exist
        ValueError: If the report differs from the golden
    """
    logger = get_logger()
    logger.info(f"Comparing report with golden file {golden_file}")

    golden = load_report(golden_file)
    mismatches = compare_to_golden(report, golden, rel_tol)
    if not mismatches:
        logger.info(f"Golden comparison passed: {golden_file}")
        return True

    logger.error(f"Golden comparison FAILED ({len(mismatches)} differences)")
    for message in mismatches:
        logger.error(f"  {message}")
    raise ValueError(f"Report differs from golden {golden_file}: {mismatches[0]}")


def golden_from_report(report: Dict[str, Any], residuals: bool = False) -> Dict[str, Any]:
    """
    Golden content for a report: overall, suite and check verdicts, and
    with ``residuals`` also each check's max residual.
    """
    golden: Dict[str, Any] = {'scenario': report.get('scenario')}
    if 'classification' in report:
        golden['classification'] = report['classification'].get('verdict')
        return golden

    golden['verdict'] = report.get('verdict')
    golden['suites'] = {}
    for suite_name, suite in report.get('suites', {}).items():
        checks = {}
        for check in suite.get('checks', []):
            if residuals and check.get('max_residual') is not None:
                checks[check['name']] = {'verdict': check['verdict'], 'max_residual': check['max_residual']}
            else:
                checks[check['name']] = check['verdict']
        golden['suites'][suite_name] = {'verdict': _suite_verdict(suite), 'checks': checks}
    return golden
