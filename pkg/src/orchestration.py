"""
Command-line front end of the Kähler surface lab.

Subcommands:
- verify:   run a scenario's suites, write a JSON report, optionally compare with a golden file
- scan:     tabulate curvature fields over the sample points or a grid
- table:    print the profile coefficients A1..A4 for a Kähler class (a, b)
- classify: place a Kähler instance in the weakly selfdual classification

Exit codes: 0 all checks pass, 1 a check fails (or the run is interrupted),
2 configuration error.
"""

import argparse
import logging
import sys
from typing import List, Optional, Tuple

from src.coefficients import (
    boundary_coefficients,
    hirzebruch_coefficients,
    profile_flags,
    solve_boundary_coefficients,
)
from src.config_loader import Scenario, build_instance, load_scenario
from src.errors import ConfigurationError
from src.families import FamilyInstance
from src.logger import get_logger, log_banner, setup_logging
from src.reports import (
    classification_report,
    coefficient_report,
    default_output_path,
    format_number,
    verify_report,
    write_report,
    write_table,
)
from src.validator import golden_from_report, validate_against_golden
from src.verify import (
    DOMAIN_LABEL,
    NOT_APPLICABLE,
    PASS,
    SCAN_FIELDS,
    ToleranceConfig,
    classify,
    grid_points,
    run_suites,
    sample_points,
    scan_fields,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def _overrides(args) -> dict:
    return {
        'identity_tol': getattr(args, 'tol', None),
        'samples_per_box': getattr(args, 'samples', None),
        'rng_seed': getattr(args, 'seed', None),
        'order': getattr(args, 'order', None),
        'workers': getattr(args, 'workers', None),
    }


def prepare_scenario(scenario_path: str, **overrides) -> Tuple[Scenario, FamilyInstance, ToleranceConfig]:
    """
    Load a scenario, build its instance and resolve its tolerances.

    Raises:
        FileNotFoundError: If the scenario file doesn't exist
        ValueError: On any configuration or construction error
    """
    scenario = load_scenario(scenario_path)
    tol = scenario.tolerance_config(**overrides)
    instance = build_instance(scenario)
    return scenario, instance, tol


def _golden_path(args, scenario: Scenario) -> Optional[str]:
    """--golden PATH, or the scenario's golden file for a bare --golden."""
    if args.golden is None:
        return None
    if args.golden:
        return args.golden
    if 'golden' not in scenario.output:
        raise ConfigurationError(f"Scenario '{scenario.name}' has no 'output.golden' for --golden")
    return scenario.output['golden']


def cmd_verify(args) -> int:
    """
    Run every suite of a scenario and write the report.

    Returns:
        int: 0 if every check passes or is not applicable, 1 on any failure
            or golden mismatch, 2 on configuration errors
    """
    logger = get_logger()

    try:
        scenario, instance, tol = prepare_scenario(args.scenario, **_overrides(args))
        golden = _golden_path(args, scenario)
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    logger.info(f"Scenario: {scenario.name} ({instance.family}, {instance.kind})")
    logger.info(f"Suites: {', '.join(scenario.suites)}")
    logger.info(f"Samples per box: {tol.samples_per_box}, seed: {tol.rng_seed}, order: {tol.order}")

    results = run_suites(instance, scenario.suites, tol, show_progress=args.progress)
    report = verify_report(scenario.name, instance, tol, results)
    out = args.out or scenario.output.get('report') or default_output_path(scenario.name, 'verify')
    write_report(out, report)

    # Summary
    log_banner(f"VERIFICATION SUMMARY ({DOMAIN_LABEL})", logger)
    for result in results:
        counts = result.counts()
        marker = '✓' if result.passed else '✗'
        logger.info(f"{marker} {result.suite}: {counts[PASS]} passed, {counts['fail']} failed, "
                    f"{counts[NOT_APPLICABLE]} not applicable")
        for name in result.failed_checks:
            check = result.report(name)
            logger.error(f"    ✗ {name} [{check.provenance}] max residual {check.max_residual} "
                         f"(tolerance {check.tolerance:g}) {check.detail}")

    code = EXIT_OK if report['verdict'] == 'pass' else EXIT_FAIL

    if args.write_golden:
        write_report(args.write_golden, golden_from_report(report))
    if golden:
        try:
            validate_against_golden(report, golden)
        except ValueError as e:
            logger.error(str(e))
            code = EXIT_FAIL

    return code


def cmd_scan(args) -> int:
    """
    Tabulate fields at the scenario's sample points (or a grid).

    Returns:
        int: 0 on success, 2 on configuration errors or unknown fields
    """
    logger = get_logger()

    unknown = [f for f in args.fields if f not in SCAN_FIELDS]
    if unknown:
        logger.error(f"Unknown scan field(s): {', '.join(unknown)} (known: {', '.join(SCAN_FIELDS)})")
        return EXIT_CONFIG
    if args.grid is not None and args.grid < 2:
        logger.error(f"--grid needs at least 2 points per axis, got {args.grid}")
        return EXIT_CONFIG

    try:
        scenario, instance, tol = prepare_scenario(args.scenario, **_overrides(args))
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    points = grid_points(instance, args.grid) if args.grid else sample_points(instance, tol)
    logger.info(f"Scanning {', '.join(args.fields)} on {instance.name} at {len(points)} points")
    rows = scan_fields(instance, args.fields, tol, points=points)

    header = list(instance.coordinate_names) + list(args.fields)
    out = args.out or scenario.output.get('table') or default_output_path(scenario.name, 'scan', 'csv')
    write_table(out, header, rows)
    logger.info(f"✓ {len(rows)} rows written to {out}")
    return EXIT_OK


def cmd_table(args) -> int:
    """
    Print the profile coefficients and their curvature flags.

    With --eps or --boundary the closed-form boundary profile is used,
    otherwise the extremal profile on the Hirzebruch surface F_k.
    """
    logger = get_logger()

    try:
        if args.eps is not None or args.boundary is not None:
            eps = 1.0 if args.eps is None else args.eps
            k = 1.0 if args.boundary is None else args.boundary
            coefficients = boundary_coefficients(args.a, args.b, eps=eps, k=k)
            source = 'boundary'
        else:
            eps, k = 1.0, float(args.k)
            coefficients = hirzebruch_coefficients(args.a, args.b, args.k)
            source = 'calabi' if args.k == 1 else 'hirzebruch'
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    solved = solve_boundary_coefficients(args.a, args.b, eps=eps, k=k)
    drift = max(abs(x - y) for x, y in zip(coefficients.as_tuple(), solved.as_tuple()))
    logger.debug(f"Closed form vs linear solve: max difference {drift:.3e}")

    flags = profile_flags(coefficients)
    print(f"{'='*60}")
    print(f"Profile coefficients ({source}) a={format_number(args.a)} b={format_number(args.b)} "
          f"eps={format_number(eps)} k={format_number(k)}")
    print(f"{'='*60}")
    for name, value in zip(('A1', 'A2', 'A3', 'A4'), coefficients.as_tuple()):
        print(f"{name} = {format_number(value)}")
    for name in ('weakly_selfdual', 'selfdual', 'bach_flat'):
        print(f"{'✓' if flags[name] else '✗'} {name}: {'yes' if flags[name] else 'no'}")

    if args.out:
        write_report(args.out, coefficient_report(args.a, args.b, source, coefficients, flags, eps, k))
    return EXIT_OK


def cmd_classify(args) -> int:
    """
    Classify a Kähler instance; exit 1 when the predicates are mixed.
    """
    logger = get_logger()

    try:
        scenario, instance, tol = prepare_scenario(args.scenario, **_overrides(args))
        golden = _golden_path(args, scenario)
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    result = classify(instance, tol)
    report = classification_report(scenario.name, instance, tol, result)
    out = args.out or default_output_path(scenario.name, 'classify')
    write_report(out, report)

    if result.ambiguous:
        logger.error(f"✗ {scenario.name}: ambiguous ({result.detail})")
        code = EXIT_FAIL
    else:
        logger.info(f"✓ {scenario.name}: {result.verdict} ({DOMAIN_LABEL})")
        code = EXIT_OK

    if golden:
        try:
            validate_against_golden(report, golden)
        except ValueError as e:
            logger.error(str(e))
            code = EXIT_FAIL
    return code


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], default='INFO',
                        help='Logging level (default: INFO)')
    parser.add_argument('--log-file', default='logs/kahler_lab.log',
                        help='Log file path (default: logs/kahler_lab.log)')
    parser.add_argument('--no-log-file', dest='log_file', action='store_const', const=None,
                        help='Log to the console only')


def _add_sampling(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('scenario', help='Path to YAML scenario file')
    parser.add_argument('--tol', type=float, help='Identity tolerance (default: scenario or 1e-8)')
    parser.add_argument('--samples', type=int, help='Sample points per box, corners included')
    parser.add_argument('--seed', type=int, help='Sobol scrambling seed (overrides KAHLER_LAB_SEED)')
    parser.add_argument('--order', type=int, choices=[2, 3, 4], help='Jet order of the metric (default: 4)')
    parser.add_argument('--workers', type=int, help='Worker threads for the per-sample fan-out')
    parser.add_argument('--out', help='Output file (default: from the scenario, else reports/)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Kähler surface lab - curvature verification of explicit 4-metrics',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Run all suites of a scenario
  python -m src.orchestration verify config/scenarios/e1_weakly_selfdual.yaml

  # Fewer samples, fixed seed, compare with the scenario's golden file
  python -m src.orchestration verify config/scenarios/calabi_e2.yaml --samples 32 --seed 7 --golden

  # Tabulate s and kappa on a 5-point grid
  python -m src.orchestration scan config/scenarios/calabi_e2.yaml --fields s kappa --grid 5

  # Coefficients of the extremal profile on F_1 with a=1, b=sqrt(3)
  python -m src.orchestration table 1 1.7320508075688772

  # Classification of a weakly selfdual instance
  python -m src.orchestration classify config/scenarios/orthotoric_einstein.yaml

Environment:
  KAHLER_LAB_SEED  default sampling seed (flags override it)
        """
    )
    subparsers = parser.add_subparsers(dest='command', required=True)

    verify = subparsers.add_parser('verify', help='Run the suites of a scenario')
    _add_sampling(verify)
    verify.add_argument('--golden', nargs='?', const='',
                        help="Compare with a golden file (bare flag: the scenario's output.golden)")
    verify.add_argument('--write-golden', help='Write the verdicts of this run as a golden file')
    verify.add_argument('--progress', action='store_true', help='Show a progress bar')
    _add_common(verify)
    verify.set_defaults(handler=cmd_verify)

    scan = subparsers.add_parser('scan', help='Tabulate curvature fields')
    _add_sampling(scan)
    scan.add_argument('--fields', nargs='+', default=['s'],
                      help=f"Fields to tabulate (default: s; known: {', '.join(SCAN_FIELDS)})")
    scan.add_argument('--grid', type=int, help='Points per axis of a regular grid instead of the samples')
    _add_common(scan)
    scan.set_defaults(handler=cmd_scan)

    table = subparsers.add_parser('table', help='Profile coefficients for a Kähler class')
    table.add_argument('a', type=float, help='Lower end of the momentum interval (0 < a)')
    table.add_argument('b', type=float, help='Upper end of the momentum interval (a < b)')
    table.add_argument('--k', type=int, default=1, help='Hirzebruch index (default: 1)')
    table.add_argument('--eps', type=float, help='z^2 coefficient of the boundary profile')
    table.add_argument('--boundary', type=float, help='Boundary constant of the boundary profile')
    table.add_argument('--out', help='Also write the coefficients as JSON')
    _add_common(table)
    table.set_defaults(handler=cmd_table)

    classify_parser = subparsers.add_parser('classify', help='Weakly selfdual classification')
    _add_sampling(classify_parser)
    classify_parser.add_argument('--golden', nargs='?', const='',
                                 help="Compare with a golden file (bare flag: the scenario's output.golden)")
    _add_common(classify_parser)
    classify_parser.set_defaults(handler=cmd_classify)

    return parser


def main(argv: Optional[List[str]] = None):
    """
    Command-line interface.

    Usage:
        python -m src.orchestration verify config/scenarios/e1_weakly_selfdual.yaml
        python -m src.orchestration scan config/scenarios/calabi_e2.yaml --fields s kappa
        python -m src.orchestration table 1 2 --k 2
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    # Setup logging
    log_level = getattr(logging, args.log_level)
    setup_logging(log_file=args.log_file, log_level=log_level)

    logger = get_logger()
    log_banner(f"KÄHLER SURFACE LAB - {args.command}", logger)

    try:
        code = args.handler(args)
    except KeyboardInterrupt:
        logger.warning("\nRun interrupted by user")
        code = EXIT_FAIL
    except Exception as e:
        logger.error(f"\nFatal error: {e}")
        code = EXIT_FAIL

    sys.exit(code)


if __name__ == '__main__':
    main()
