"""Tests for the validation harness at desk scale."""

import math
import threading

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError as PydanticValidationError
from scipy import stats

from harness.reports import render_summary
from harness.stats import empirical_scgf, ks_statistic, log_tail_frequency, mean_and_se, run_trials
from harness.suites import (
    SUITES,
    SuiteConfig,
    Thresholds,
    calibration_suite,
    clt_suite,
    consistency_suite,
    exponential_law_suite,
    ldp_suite,
    run_all,
)
from hitrev.errors import DegenerateVarianceError


def strip_clock(report):
    return report.model_copy(update={"wall_clock": 0.0})


class TestStats:
    """Statistics helpers."""

    def test_ks_of_perfect_quantiles(self):
        sample = (np.arange(1000) + 0.5) / 1000
        assert ks_statistic(sample, stats.uniform.cdf) == pytest.approx(0.0005, abs=1e-12)

    def test_ks_of_empty_sample(self):
        with pytest.raises(ValueError):
            ks_statistic([], stats.uniform.cdf)

    def test_mean_and_se(self):
        mean, se = mean_and_se([1.0, 2.0, 3.0, 4.0])
        assert mean == 2.5
        assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)

    def test_empirical_scgf_of_constant(self):
        assert empirical_scgf(np.full(50, 3.0), 0.5, 10) == pytest.approx(0.15)

    def test_log_tail_frequency(self):
        samples = np.array([0.0, 10.0, 20.0, 30.0])
        assert log_tail_frequency(samples, 10, (1.5, 3.0)) == pytest.approx(math.log(0.5) / 10)
        assert log_tail_frequency(samples, 10, (5.0, 6.0)) == -math.inf

    def test_run_trials_serial_order(self):
        batch = run_trials(abs, [-3, 1, -2])
        assert batch.results == [3, 1, 2]
        assert not batch.incomplete

    def test_run_trials_pool_matches_serial(self):
        tasks = list(range(-20, 20))
        assert run_trials(abs, tasks, workers=2).results == run_trials(abs, tasks).results

    def test_run_trials_cancelled(self):
        cancel = threading.Event()
        cancel.set()
        batch = run_trials(abs, [1, 2, 3], cancel=cancel)
        assert batch.incomplete
        assert batch.results == []


class TestSuiteConfig:
    """Validation of suite configurations."""

    def test_defaults(self):
        config = SuiteConfig(suite="clt", n_values=[500], trials=1000, base_seed=7)
        assert config.model == "builtin:cyclic"
        assert config.estimator == "W"
        assert config.thresholds.clt_ks_max == 0.06

    def test_too_few_trials(self):
        with pytest.raises(PydanticValidationError):
            SuiteConfig(suite="clt", n_values=[10], trials=99)

    def test_n_values_nondecreasing(self):
        with pytest.raises(PydanticValidationError):
            SuiteConfig(suite="consistency", n_values=[50, 20])

    def test_consistency_needs_n_at_least_two(self):
        with pytest.raises(PydanticValidationError):
            SuiteConfig(suite="consistency", n_values=[1])

    def test_p_grid_range(self):
        with pytest.raises(PydanticValidationError):
            SuiteConfig(suite="ldp", n_values=[10], p_grid=[0.7])

    def test_unknown_field(self):
        with pytest.raises(PydanticValidationError):
            SuiteConfig(suite="ldp", n_values=[10], sample_size=3)

    def test_sign_pairs_minimum(self):
        with pytest.raises(PydanticValidationError):
            SuiteConfig(suite="calibration", n_values=[4], pairs=19)


class TestExponentialSuite:
    """Rescaled hitting times."""

    def test_report_structure(self, tmp_path):
        out = tmp_path / "raw.csv"
        config = SuiteConfig(
            suite="exponential", model="builtin:iid2", n_values=[4], trials=100, words=2, cap=20_000, out=str(out)
        )
        report = exponential_law_suite(config)
        assert report.suite == "exponential"
        assert len(report.rows) == 2
        assert report.checks["n=4"]["floor_violations"] == 0
        assert report.oracle["entropy_rate"] == pytest.approx(math.log(2.0))

        raw = pd.read_csv(out)
        assert list(raw.columns) == ["suite", "n", "trial", "value"]
        assert len(raw) == 200 - report.censored
        assert (raw["n"] == 4).all()
        assert raw["trial"].is_unique

    def test_fixed_word(self):
        config = SuiteConfig(suite="exponential", model="builtin:cyclic", n_values=[3], trials=100, cap=20_000)
        report = exponential_law_suite(config, word="aba")
        assert [row["word"] for row in report.rows] == ["aba"]
        assert report.rows[0]["period"] == 2

    def test_deterministic(self):
        config = SuiteConfig(suite="exponential", model="builtin:iid2", n_values=[3], trials=100, words=1, cap=5000)
        assert strip_clock(exponential_law_suite(config)) == strip_clock(exponential_law_suite(config))

    def test_passes_on_iid_words(self):
        config = SuiteConfig(suite="exponential", model="builtin:iid2", n_values=[8], trials=500, words=10)
        report = exponential_law_suite(config)
        assert report.passed
        assert report.checks["n=8"]["band_ok"]
        assert report.checks["n=8"]["words_below_ks"] >= 9

    def test_heavy_censoring_fails(self):
        config = SuiteConfig(suite="exponential", model="builtin:iid2", n_values=[8], trials=100, words=2, cap=100)
        report = exponential_law_suite(config)
        assert report.censored > 0.01 * 200
        assert not report.passed
        assert any("censored fraction" in note for note in report.notes)

    def test_band_slack_is_its_own_threshold(self):
        base = dict(suite="exponential", model="builtin:iid2", n_values=[4], trials=100, words=2, cap=20_000)
        loose = exponential_law_suite(SuiteConfig(**base, thresholds=Thresholds(ks_max=1.0, band_slack=1.0)))
        tight = exponential_law_suite(SuiteConfig(**base, thresholds=Thresholds(ks_max=1.0, band_slack=-1.0)))
        assert loose.checks["n=4"]["band_ok"]
        assert not tight.checks["n=4"]["band_ok"]
        assert loose.checks["n=4"]["words_below_ks"] == tight.checks["n=4"]["words_below_ks"] == 2
        assert not tight.passed


class TestEstimatorSuites:
    """Consistency, CLT and LDP suites."""

    def test_consistency_rows(self):
        config = SuiteConfig(suite="consistency", n_values=[4, 6], trials=100, cap=200_000, base_seed=1)
        report = consistency_suite(config)
        assert [row["n"] for row in report.rows] == [4, 6]
        assert report.oracle["mep"] == pytest.approx(0.25 * math.log(2.0), abs=1e-12)
        assert "quantiles_nonincreasing" in report.checks
        assert report.config["base_seed"] == 1

    def test_consistency_with_hitting_estimator(self):
        config = SuiteConfig(suite="consistency", n_values=[4], trials=100, cap=200_000, estimator="H")
        report = consistency_suite(config)
        assert report.rows[0]["censored"] == report.censored

    def test_clt_rows(self):
        config = SuiteConfig(suite="clt", n_values=[6], trials=100, cap=200_000)
        report = clt_suite(config)
        row = report.rows[0]
        assert set(row) == {"n", "ks", "var_ratio", "skew", "censored"}
        assert report.oracle["sigma2"] > 0.0

    @pytest.mark.parametrize("model", ["builtin:symmetric3", "builtin:reversible3", "builtin:random2o2"])
    def test_clt_degenerate_variance(self, model):
        config = SuiteConfig(suite="clt", model=model, n_values=[4], trials=100)
        with pytest.raises(DegenerateVarianceError):
            clt_suite(config)

    def test_consistency_passes_on_cyclic_chain(self):
        report = consistency_suite(SuiteConfig(suite="consistency", n_values=[4, 6, 8], trials=300))
        assert report.passed
        assert report.checks["quantiles_nonincreasing"]
        assert report.censored == 0

    def test_ldp_rows_and_symmetry(self):
        config = SuiteConfig(suite="ldp", n_values=[4], trials=100, cap=200_000, p_grid=[-0.25, 0.25])
        report = ldp_suite(config)
        assert [row["p"] for row in report.rows] == [-0.25, 0.25]
        assert not report.experimental
        assert "symmetry" in report.checks
        assert report.oracle["c_minus"] < 0.0 < report.oracle["c_plus"]

    def test_ldp_with_hitting_estimator_is_experimental(self):
        config = SuiteConfig(suite="ldp", n_values=[4], trials=100, cap=200_000, estimator="H", p_grid=[0.25])
        assert ldp_suite(config).experimental

    def test_deterministic(self):
        config = SuiteConfig(suite="consistency", n_values=[3], trials=100, cap=50_000, base_seed=5)
        assert strip_clock(consistency_suite(config)) == strip_clock(consistency_suite(config))

    def test_pool_matches_serial(self):
        serial = SuiteConfig(suite="consistency", n_values=[3], trials=100, cap=50_000, base_seed=5)
        pooled = serial.model_copy(update={"workers": 2})
        a, b = consistency_suite(serial), consistency_suite(pooled)
        assert a.rows == b.rows


class TestCalibrationSuite:
    """Sign-test rejection rates."""

    def test_irreversible_model_rows(self):
        config = SuiteConfig(suite="calibration", n_values=[3], trials=100, pairs=20, cap=50_000)
        report = calibration_suite(config)
        row = report.rows[0]
        assert row["replications"] == 100
        assert 0.0 <= row["rate"] <= 1.0
        assert "lower" not in row

    def test_reversible_model_gets_binomial_interval(self):
        config = SuiteConfig(
            suite="calibration", model="builtin:symmetric3", n_values=[3], trials=100, pairs=20, cap=50_000
        )
        row = calibration_suite(config).rows[0]
        assert row["lower"] <= 0.05 <= row["upper"]


class TestCancellation:
    """Cancelled runs are flagged and stop the queue."""

    def test_cancelled_suite_is_incomplete(self):
        cancel = threading.Event()
        cancel.set()
        config = SuiteConfig(suite="consistency", n_values=[4], trials=100)
        report = consistency_suite(config, cancel=cancel)
        assert report.incomplete
        assert not report.passed
        assert report.rows == []

    def test_run_all_stops_after_incomplete(self):
        cancel = threading.Event()
        cancel.set()
        configs = [
            SuiteConfig(suite="consistency", n_values=[4], trials=100),
            SuiteConfig(suite="ldp", n_values=[4], trials=100),
        ]
        reports = run_all(configs, cancel=cancel)
        assert len(reports) == 1

    def test_registry(self):
        assert set(SUITES) == {"exponential", "consistency", "clt", "ldp", "calibration"}


class TestSummaryRendering:
    """Human-readable summaries."""

    def test_render(self):
        config = SuiteConfig(suite="consistency", n_values=[3], trials=100, cap=50_000)
        report = consistency_suite(config)
        text = render_summary(report)
        assert text.startswith("Suite: consistency")
        assert ("PASS" in text) == report.passed
        assert "mep" in text
