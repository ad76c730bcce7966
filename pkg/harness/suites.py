"""
Monte Carlo validation suites.

Each suite draws independent trials with seeds derived from
(base_seed, suite, n, trial), compares them against values from
``hitrev.oracle`` and returns a SuiteReport. Trials run through
``harness.stats.run_trials`` and are merged in trial-index order, so a
report depends on its SuiteConfig only.
"""

import logging
import math
import threading
import time
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import stats

from harness.reports import render_summary
from harness.stats import (
    derive_seed,
    empirical_scgf,
    ks_statistic,
    log_tail_frequency,
    mean_and_se,
    run_trials,
)
from hitrev.errors import DegenerateVarianceError, IndeterminateError, ValidationError
from hitrev.estimators import estimate_H_stream, estimate_W_stream, test_reversibility_sign_stream
from hitrev.io import resolve_model
from hitrev.matching import search_chunks, word_period
from hitrev.model import MarkovModel, Word, cylinder_log_prob, entropy_production_exact, reverse_model, stream
from hitrev.oracle import (
    REVERSIBLE_MEP,
    entropy_rate_exact,
    mep_exact,
    rate_function,
    scgf,
    scgf_endpoints,
    sigma2_exact,
    waiting_scgf,
)

logger = logging.getLogger(__name__)

MIN_TRIALS = 100
LDP_MAX_P = 0.6
DEFAULT_P_GRID = [-0.5, -0.25, 0.25, 0.5]
BAND_T_GRID = [0.1, 0.2, 0.3, 0.4, 0.5]
DEGENERATE_SIGMA2 = 1e-10
RAW_COLUMNS = ["suite", "n", "trial", "value"]

SuiteName = Literal["exponential", "consistency", "clt", "ldp", "calibration"]


class Thresholds(BaseModel):
    """Statistical acceptance choices; defaults are the recorded ones."""

    model_config = ConfigDict(frozen=True)

    ks_max: float = 0.04
    band_slack: float = 0.04
    word_pass_fraction: float = 0.9
    se_multiplier: float = 3.0
    clt_ks_max: float = 0.06
    var_rel_tol: float = 0.15
    ldp_tol: float = 0.01
    max_censored_fraction: float = 0.01
    calibration_power: float = 0.95


class SuiteConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    suite: SuiteName
    model: str = "builtin:cyclic"
    n_values: List[int]
    trials: int = Field(default=MIN_TRIALS, ge=MIN_TRIALS)
    base_seed: int = Field(default=0, ge=0, lt=2**64)
    cap: int = Field(default=10**8, ge=1)
    workers: int = Field(default=1, ge=1)
    out: Optional[str] = None
    estimator: Literal["H", "W"] = "W"
    word: Optional[str] = None
    words: int = Field(default=10, ge=1)
    p_grid: Optional[List[float]] = None
    pairs: int = Field(default=100, ge=20)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    thresholds: Thresholds = Thresholds()

    @field_validator("n_values")
    @classmethod
    def _nondecreasing(cls, values: List[int]) -> List[int]:
        if not values:
            raise ValueError("n_values must not be empty")
        if any(n < 1 for n in values):
            raise ValueError("n values must be >= 1")
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("n values must be nondecreasing")
        return values

    @model_validator(mode="after")
    def _suite_specific(self):
        if self.suite in ("consistency", "clt") and min(self.n_values) < 2:
            raise ValueError(f"{self.suite} suite needs n >= 2")
        if self.p_grid is not None and any(abs(p) > LDP_MAX_P for p in self.p_grid):
            raise ValueError(f"p_grid must lie in [-{LDP_MAX_P}, {LDP_MAX_P}]")
        return self


class SuiteReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    suite: str
    model_id: str
    config: Dict[str, Any]
    trials: int
    rows: List[Dict[str, Any]]
    oracle: Dict[str, float]
    checks: Dict[str, Any] = {}
    passed: bool
    incomplete: bool = False
    censored: int = 0
    experimental: bool = False
    wall_clock: float = 0.0
    notes: List[str] = []


# ---------------------------------------------------------------------------
# Trials (top-level so they can be shipped to worker processes)
# ---------------------------------------------------------------------------


def _hit_trial(task: Tuple[MarkovModel, np.ndarray, int, int, bool]) -> Optional[int]:
    """Hitting time of ``word`` in a fresh trajectory, or its return time from a start on ``word``."""
    model, word, seed, cap, conditional = task
    chunks = stream(model, seed, prefix=word if conditional else None)
    record = search_chunks(chunks, [word], ["return" if conditional else "hit"], cap)[0]
    return record.value


def _estimate_trial(task: Tuple[MarkovModel, str, int, int, int]) -> Tuple[Optional[float], float]:
    """(estimate or None when censored, exact entropy production of the same block)."""
    model, estimator, n, cap, seed = task
    if estimator == "H":
        report, prefix = estimate_H_stream(model, seed, n, cap)
    else:
        report, prefix = estimate_W_stream(model, derive_seed(seed, "source"), derive_seed(seed, "target"), n, cap)
    exact = entropy_production_exact(model, prefix) if prefix.size >= model.order else math.nan
    return (None if report.censored else report.raw), exact


def _calibration_trial(task: Tuple[MarkovModel, int, int, int, float, int]) -> str:
    model, pairs, n, cap, alpha, seed = task
    try:
        return test_reversibility_sign_stream(model, pairs, n, cap, alpha=alpha, base_seed=seed).decision
    except IndeterminateError:
        return "indeterminate"


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


class _Run:
    """Bookkeeping shared by one suite execution."""

    def __init__(self, config: SuiteConfig, cancel: Optional[threading.Event]):
        self.config = config
        self.cancel = cancel
        self.model = resolve_model(config.model)
        self.started = time.perf_counter()
        self.rows: List[Dict[str, Any]] = []
        self.raw: List[Dict[str, Any]] = []
        self.notes: List[str] = []
        self.checks: Dict[str, Any] = {}
        self.censored = 0
        self.incomplete = False

    def trials(self, fn: Callable, tasks: Sequence[Any]) -> List[Any]:
        batch = run_trials(fn, tasks, self.config.workers, self.cancel)
        self.incomplete = self.incomplete or batch.incomplete
        return batch.results

    def estimates(self, n: int, model: Optional[MarkovModel] = None) -> Tuple[np.ndarray, np.ndarray, int]:
        """Uncensored estimates, the matching exact values and the censored count at word length n."""
        cfg = self.config
        model = self.model if model is None else model
        tasks = [
            (model, cfg.estimator, n, cfg.cap, derive_seed(cfg.base_seed, cfg.suite, n, t))
            for t in range(cfg.trials)
        ]
        results = self.trials(_estimate_trial, tasks)
        kept = [(raw, exact) for raw, exact in results if raw is not None]
        censored = len(results) - len(kept)
        raws = np.array([k[0] for k in kept], dtype=float)
        exacts = np.array([k[1] for k in kept], dtype=float)
        return raws, exacts, censored

    def record_raw(self, n: int, values: Sequence[float], offset: int = 0) -> None:
        for i, value in enumerate(values):
            self.raw.append({"suite": self.config.suite, "n": n, "trial": offset + i, "value": float(value)})

    def censoring_ok(self, censored: int, total: int) -> bool:
        if total == 0:
            return False
        fraction = censored / total
        if fraction > self.config.thresholds.max_censored_fraction:
            self.notes.append(f"censored fraction {fraction:.3g} exceeds the allowed maximum")
            return False
        return True

    def finish(self, oracle: Dict[str, float], passed: bool, experimental: bool = False) -> SuiteReport:
        cfg = self.config
        if cfg.out:
            pd.DataFrame(self.raw, columns=RAW_COLUMNS).to_csv(cfg.out, index=False, float_format="%.17g")
            logger.info("Wrote %d raw trial values to %s", len(self.raw), cfg.out)
        report = SuiteReport(
            suite=cfg.suite,
            model_id=self.model.model_id,
            config=cfg.model_dump(),
            trials=cfg.trials,
            rows=self.rows,
            oracle=oracle,
            checks=self.checks,
            passed=passed and not self.incomplete,
            incomplete=self.incomplete,
            censored=self.censored,
            experimental=experimental,
            wall_clock=time.perf_counter() - self.started,
            notes=self.notes,
        )
        logger.info("\n%s", render_summary(report))
        return report

    def cancelled(self) -> bool:
        if self.incomplete:
            self.notes.append("cancelled before every n was processed")
        return self.incomplete


def _nonincreasing(values: Sequence[float]) -> bool:
    return all(b <= a for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def exponential_law_suite(
    config: SuiteConfig,
    word: Optional[str] = None,
    cancel: Optional[threading.Event] = None,
) -> SuiteReport:
    """
    Rescaled hitting times T * P([a]) against an exponential law.

    For every n, ``config.words`` random words (or the single ``word``) are
    searched in fresh stationary trajectories. The rate is fitted by the
    inverse mean and the KS distance to Exp(rate) reported. Return times
    from starts conditioned on the word are checked against the period
    floor, and the empirical CDF for t <= 1/2 against the band spanned by
    the smallest and largest fitted rates, widened by ``band_slack``.
    """
    run = _Run(config, cancel)
    model, cfg = run.model, config
    word = word if word is not None else cfg.word
    th = cfg.thresholds

    if word is not None:
        fixed = Word.from_tokens(model.alphabet, word).as_array()
        model.check_word(fixed)
        n_values = [fixed.size]
    else:
        fixed = None
        n_values = cfg.n_values
    if min(n_values) < model.order:
        raise ValidationError(f"Word length must be at least the model order {model.order}")

    passed = True
    for n in n_values:
        logger.info("exponential suite: n=%d, %d trials per word", n, cfg.trials)
        if fixed is not None:
            words = fixed[None, :]
        else:
            rng = np.random.default_rng(derive_seed(cfg.base_seed, "exponential-words", n))
            words = rng.integers(0, model.size, size=(cfg.words, n)).astype(np.uint8)

        rates, cdfs, ks_values, violations, censored_n = [], [], [], 0, 0
        for w, block in enumerate(words):
            seeds = [derive_seed(cfg.base_seed, cfg.suite, n, w, t) for t in range(cfg.trials)]
            hits = run.trials(_hit_trial, [(model, block, s, cfg.cap, False) for s in seeds])
            returns = run.trials(
                _hit_trial,
                [(model, block, derive_seed(s, "conditional"), cfg.cap, True) for s in seeds],
            )
            if run.incomplete:
                break

            values = np.array([h for h in hits if h is not None], dtype=float)
            censored_n += len(hits) - values.size
            period = word_period(block).k
            floor_hits = sum(1 for r in returns if r is not None and r < period)
            violations += floor_hits

            rescaled = values * math.exp(cylinder_log_prob(model, block))
            run.record_raw(n, rescaled, offset=w * cfg.trials)
            rate = 1.0 / float(rescaled.mean()) if rescaled.size else math.nan
            ks = ks_statistic(rescaled, stats.expon(scale=1.0 / rate).cdf) if rescaled.size else math.nan
            rates.append(rate)
            ks_values.append(ks)
            cdfs.append([float(np.mean(rescaled <= t)) for t in BAND_T_GRID] if rescaled.size else None)
            run.rows.append(
                {
                    "n": n,
                    "word": model.alphabet.join(block),
                    "period": period,
                    "rate": rate,
                    "ks": ks,
                    "censored": len(hits) - values.size,
                    "floor_violations": floor_hits,
                }
            )

        run.censored += censored_n
        if run.cancelled():
            break

        fitted = [r for r in rates if math.isfinite(r)]
        rho_low, rho_high = (min(fitted), max(fitted)) if fitted else (math.nan, math.nan)
        band_ok = True
        for cdf in cdfs:
            if cdf is None:
                band_ok = False
                continue
            for t, value in zip(BAND_T_GRID, cdf):
                low = 1.0 - math.exp(-rho_low * t) - th.band_slack
                high = 1.0 - math.exp(-rho_high * t) + th.band_slack
                band_ok = band_ok and low <= value <= high
        good_words = sum(1 for ks in ks_values if ks < th.ks_max)
        word_ok = good_words >= th.word_pass_fraction * len(ks_values)
        run.checks[f"n={n}"] = {
            "rate_low": rho_low,
            "rate_high": rho_high,
            "band_ok": band_ok,
            "words_below_ks": good_words,
            "floor_violations": violations,
        }
        passed = (
            passed
            and word_ok
            and band_ok
            and violations == 0
            and run.censoring_ok(censored_n, cfg.trials * len(words))
        )

    return run.finish({"entropy_rate": entropy_rate_exact(model)}, passed)


def consistency_suite(config: SuiteConfig, cancel: Optional[threading.Event] = None) -> SuiteReport:
    """
    Estimator/n against MEP, and |estimate - exact| / log n across n.

    Passes when the mean per-symbol estimate at the largest n is within
    ``se_multiplier`` standard errors of MEP and the 99% quantile of
    |estimate - exact| / log n does not increase with n.
    """
    run = _Run(config, cancel)
    cfg, th = config, config.thresholds
    mep = mep_exact(run.model)

    quantiles, within, censoring = [], True, True
    for n in cfg.n_values:
        logger.info("consistency suite: n=%d (%d trials, estimator %s)", n, cfg.trials, cfg.estimator)
        raws, exacts, censored = run.estimates(n)
        if run.cancelled():
            break
        run.censored += censored
        censoring = run.censoring_ok(censored, cfg.trials) and censoring
        run.record_raw(n, raws)
        if raws.size == 0:
            within = False
            continue

        mean, se = mean_and_se(raws / n)
        delta = np.abs(raws - exacts) / math.log(n)
        q99 = float(np.quantile(delta, 0.99))
        quantiles.append(q99)
        # only the largest n decides
        within = abs(mean - mep) <= th.se_multiplier * se
        run.rows.append(
            {
                "n": n,
                "mean_per_symbol": mean,
                "se": se,
                "mep": mep,
                "z": (mean - mep) / se if se > 0 else math.nan,
                "q99_delta_over_log_n": q99,
                "censored": censored,
            }
        )

    monotone = _nonincreasing(quantiles)
    run.checks["fitted_constant"] = max(quantiles) if quantiles else math.nan
    run.checks["quantiles_nonincreasing"] = monotone
    return run.finish({"mep": mep}, within and monotone and censoring)


def clt_suite(config: SuiteConfig, cancel: Optional[threading.Event] = None) -> SuiteReport:
    """
    (estimate - n MEP) / sqrt(n sigma^2) against the standard normal.

    Raises DegenerateVarianceError for models with sigma^2 = 0 (reversible).
    """
    run = _Run(config, cancel)
    cfg, th = config, config.thresholds
    sigma2 = sigma2_exact(run.model)
    if sigma2 <= DEGENERATE_SIGMA2:
        raise DegenerateVarianceError(f"sigma^2 = {sigma2!r}: the CLT is degenerate for this model")
    mep = mep_exact(run.model)

    skews, passed = [], True
    for n in cfg.n_values:
        logger.info("clt suite: n=%d (%d trials, estimator %s)", n, cfg.trials, cfg.estimator)
        raws, _, censored = run.estimates(n)
        if run.cancelled():
            break
        run.censored += censored
        censoring = run.censoring_ok(censored, cfg.trials)
        run.record_raw(n, raws)
        if raws.size < 2:
            passed = False
            continue

        z = (raws - n * mep) / math.sqrt(n * sigma2)
        ks = ks_statistic(z, stats.norm.cdf)
        var_ratio = float(np.var(raws, ddof=1) / (n * sigma2))
        skew = float(stats.skew(z))
        skews.append(abs(skew))
        run.rows.append({"n": n, "ks": ks, "var_ratio": var_ratio, "skew": skew, "censored": censored})
        # acceptance is judged at the largest n
        passed = ks < th.clt_ks_max and abs(var_ratio - 1.0) <= th.var_rel_tol and censoring

    run.checks["skew_shrinking"] = _nonincreasing(skews)
    return run.finish({"mep": mep, "sigma2": sigma2}, passed)


def ldp_suite(
    config: SuiteConfig,
    p_grid: Optional[Sequence[float]] = None,
    cancel: Optional[threading.Event] = None,
) -> SuiteReport:
    """
    Empirical SCGF (1/n) log mean exp(p S) against the exact one.

    With ``estimator="W"`` the target is W_U(p) = E_U(p) on |p| < 1. With
    ``estimator="H"`` the comparison is with E_U(p) and the report is marked
    experimental. Also reports a tail frequency on an interval between MEP
    and c_+, and W(-1/2) from paired runs on the model and its reversal.
    """
    run = _Run(config, cancel)
    cfg, th = config, config.thresholds
    grid = list(p_grid if p_grid is not None else (cfg.p_grid or DEFAULT_P_GRID))
    if any(abs(p) > LDP_MAX_P for p in grid):
        raise ValidationError(f"p_grid must lie in [-{LDP_MAX_P}, {LDP_MAX_P}]")
    model = run.model
    exact_fn = waiting_scgf if cfg.estimator == "W" else scgf
    mep = mep_exact(model)
    c_minus, c_plus = scgf_endpoints(model)

    passed = True
    last: Optional[Tuple[int, np.ndarray]] = None
    for n in cfg.n_values:
        logger.info("ldp suite: n=%d (%d trials, estimator %s)", n, cfg.trials, cfg.estimator)
        raws, _, censored = run.estimates(n)
        if run.cancelled():
            break
        run.censored += censored
        passed = run.censoring_ok(censored, cfg.trials) and passed
        run.record_raw(n, raws)
        if raws.size == 0:
            passed = False
            continue
        for p in grid:
            empirical = empirical_scgf(raws, p, n)
            exact = exact_fn(model, p)
            error = abs(empirical - exact)
            passed = passed and error < th.ldp_tol
            run.rows.append({"n": n, "p": p, "empirical": empirical, "exact": exact, "error": error})
        last = (n, raws)

    if last is not None and not run.incomplete:
        n, raws = last
        if c_plus - mep > REVERSIBLE_MEP:
            interval = (mep + 0.5 * (c_plus - mep), c_plus)
            run.checks["tail"] = {
                "n": n,
                "interval": list(interval),
                "empirical": log_tail_frequency(raws, n, interval),
                "exact": -rate_function(model, interval[0]).value,
            }
        reversed_raws, _, _ = run.estimates(n, reverse_model(model))
        if not run.cancelled() and reversed_raws.size:
            run.checks["symmetry"] = {
                "n": n,
                "p": -0.5,
                "model": empirical_scgf(raws, -0.5, n),
                "reversed": empirical_scgf(reversed_raws, -0.5, n),
                "se": _scgf_se(raws, -0.5, n),
            }

    oracle = {"mep": mep, "c_minus": c_minus, "c_plus": c_plus}
    return run.finish(oracle, passed, experimental=cfg.estimator == "H")


def _scgf_se(samples: np.ndarray, p: float, n: int) -> float:
    """Delta-method standard error of the empirical SCGF."""
    weights = np.exp(p * samples - np.max(p * samples))
    return float(np.std(weights, ddof=1) / np.mean(weights) / math.sqrt(samples.size) / n)


def calibration_suite(config: SuiteConfig, cancel: Optional[threading.Event] = None) -> SuiteReport:
    """
    Rejection rate of the sign test over ``trials`` replications of
    ``pairs`` pairs each.

    For a reversible model the rate must fall in the exact binomial 95%
    interval around alpha; otherwise it must reach ``calibration_power``.
    """
    run = _Run(config, cancel)
    cfg, th = config, config.thresholds
    mep = mep_exact(run.model)
    reversible = mep <= REVERSIBLE_MEP

    passed = True
    for n in cfg.n_values:
        logger.info("calibration suite: n=%d, %d replications of %d pairs", n, cfg.trials, cfg.pairs)
        tasks = [
            (run.model, cfg.pairs, n, cfg.cap, cfg.alpha, derive_seed(cfg.base_seed, cfg.suite, n, t))
            for t in range(cfg.trials)
        ]
        decisions = run.trials(_calibration_trial, tasks)
        if run.cancelled():
            break
        rejections = sum(1 for d in decisions if d == "reject_reversibility")
        undecided = sum(1 for d in decisions if d == "indeterminate")
        run.record_raw(n, [1.0 if d == "reject_reversibility" else 0.0 for d in decisions])
        rate = rejections / len(decisions)
        row = {"n": n, "replications": len(decisions), "rejections": rejections, "indeterminate": undecided, "rate": rate}
        if reversible:
            low, high = stats.binom.interval(0.95, len(decisions), cfg.alpha)
            row.update(lower=low / len(decisions), upper=high / len(decisions))
            passed = passed and row["lower"] <= rate <= row["upper"]
        else:
            passed = passed and rate >= th.calibration_power
        run.rows.append(row)

    return run.finish({"mep": mep, "alpha": cfg.alpha}, passed)


SUITES: Dict[str, Callable[..., SuiteReport]] = {
    "exponential": exponential_law_suite,
    "consistency": consistency_suite,
    "clt": clt_suite,
    "ldp": ldp_suite,
    "calibration": calibration_suite,
}


def run_all(configs: Sequence[SuiteConfig], cancel: Optional[threading.Event] = None) -> List[SuiteReport]:
    """Run suites in order; stops after the first one cut short by cancellation."""
    reports = []
    for config in configs:
        report = SUITES[config.suite](config, cancel=cancel)
        reports.append(report)
        if report.incomplete:
            break
    return reports
