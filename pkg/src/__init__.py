"""
Kähler surface lab - numerical verification of curvature identities on
explicit Kähler and almost-Kähler 4-metrics.

A metric family is evaluated in one coordinate chart with truncated Taylor
jets; curvature is assembled from the jets and checked against closed forms
and structural identities at sampled points:
- Ortho-toric, toric, Calabi-type and Hirzebruch extremal Kähler metrics
- Almost-Kähler metrics in LeBrun form (Gibbons-Hawking)
- Weak selfduality, extremality, bi-extremality and Bach-flatness suites
- Hamiltonian 2-forms and the weakly selfdual classification
- Scenario files, JSON reports and golden-file regression
"""

__version__ = "1.0.0"

# Public API exports
from src.config_loader import Scenario, build_instance, load_scenario, validate_scenario_config
from src.orchestration import main as run_lab
from src.families import (
    FamilyInstance,
    ak_lebrun,
    calabi_type,
    hirzebruch_calabi,
    kahler_product,
    orthotoric,
    orthotoric_as_toric,
    toric,
)
from src.curvature import curvature_bundle
from src.coefficients import calabi_coefficients, boundary_coefficients, hirzebruch_coefficients
from src.verify import ToleranceConfig, classify, extract_constant, run_suite, scan_fields
from src.validator import compare_to_golden, validate_against_golden
from src.logger import setup_logging, get_logger

__all__ = [
    # Version
    "__version__",

    # Scenarios
    "Scenario",
    "load_scenario",
    "validate_scenario_config",
    "build_instance",
    "run_lab",

    # Metric families
    "FamilyInstance",
    "orthotoric",
    "orthotoric_as_toric",
    "toric",
    "calabi_type",
    "hirzebruch_calabi",
    "ak_lebrun",
    "kahler_product",

    # Curvature and coefficients
    "curvature_bundle",
    "calabi_coefficients",
    "boundary_coefficients",
    "hirzebruch_coefficients",

    # Verification
    "ToleranceConfig",
    "run_suite",
    "classify",
    "extract_constant",
    "scan_fields",

    # Golden files
    "compare_to_golden",
    "validate_against_golden",

    # Logging
    "setup_logging",
    "get_logger",
]
