"""
Monte Carlo validation harness: suites checking the estimators against the
exact oracles at desk scale.
"""

from harness.stats import derive_seed, ks_statistic, run_trials
from harness.suites import (
    SUITES,
    SuiteConfig,
    SuiteReport,
    calibration_suite,
    clt_suite,
    consistency_suite,
    exponential_law_suite,
    ldp_suite,
    run_all,
)

__all__ = [
    "SUITES",
    "SuiteConfig",
    "SuiteReport",
    "calibration_suite",
    "clt_suite",
    "consistency_suite",
    "derive_seed",
    "exponential_law_suite",
    "ks_statistic",
    "ldp_suite",
    "run_all",
    "run_trials",
]
