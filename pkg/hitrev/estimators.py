"""
Entropy-production estimators built on hitting, return and waiting times,
and the irreversibility tests derived from them.

All estimators are log-ratios in nats. When one side of the ratio is
censored the report carries a one-sided bound instead of a value.
"""

import logging
import math
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import stats

from hitrev.errors import IndeterminateError, ValidationError
from hitrev.matching import (
    TimeRecord,
    matching_lengths,
    return_and_reverse_times,
    return_time,
    stream_return_times,
    stream_waiting_times,
    waiting_times,
)
from hitrev.model import MarkovModel, Trajectory, derive_seed, simulate

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05
DEFAULT_CAP = 10**8
MIN_SIGN_PAIRS = 20


class EstimateReport(BaseModel):
    """Result of one estimator run."""

    model_config = ConfigDict(frozen=True)

    estimator: Literal["H", "W", "dual", "entropy"]
    n: int
    raw: Optional[float]
    per_symbol: Optional[float]
    censored: bool = False
    bound: Optional[Literal["lower", "upper"]] = None
    indeterminate: bool = False
    caps_used: int = 0
    experimental: bool = False
    numerator: Optional[int] = None
    denominator: Optional[int] = None

    @property
    def sign(self) -> Optional[int]:
        """Sign of the true value when it can be decided, else None."""
        if self.indeterminate:
            return None
        if self.bound == "lower":
            return 1 if self.raw > 0 else None
        if self.bound == "upper":
            return -1 if self.raw < 0 else None
        return int(np.sign(self.raw))


class TestReport(BaseModel):
    """Decision of an irreversibility test."""

    model_config = ConfigDict(frozen=True)

    method: Literal["sign", "threshold"]
    statistic: Optional[float]
    p_value: Optional[float] = None
    decision: Literal["reject_reversibility", "no_evidence", "indeterminate"]
    params: Dict[str, Any]

    @model_validator(mode="after")
    def _p_value_only_for_sign(self):
        if (self.p_value is not None) != (self.method == "sign"):
            raise ValueError("p_value is reported iff method == 'sign'")
        return self


def log_ratio(numerator: int, denominator: int) -> float:
    """log(a / b) as a difference of logs, so swapping arguments negates it exactly."""
    return math.log(numerator) - math.log(denominator)


def _ratio_report(
    estimator: str, n: int, minus: TimeRecord, plus: TimeRecord
) -> EstimateReport:
    """log(minus / plus) with the censoring policy applied."""
    common = dict(estimator=estimator, n=n, caps_used=max(minus.cap, plus.cap))
    if minus.censored and plus.censored:
        return EstimateReport(raw=None, per_symbol=None, censored=True, indeterminate=True, **common)
    if minus.censored:
        raw = log_ratio(minus.cap, plus.value)
        return EstimateReport(
            raw=raw, per_symbol=raw / n, censored=True, bound="lower", denominator=plus.value, **common
        )
    if plus.censored:
        raw = log_ratio(minus.value, plus.cap)
        return EstimateReport(
            raw=raw, per_symbol=raw / n, censored=True, bound="upper", numerator=minus.value, **common
        )
    raw = log_ratio(minus.value, plus.value)
    return EstimateReport(raw=raw, per_symbol=raw / n, numerator=minus.value, denominator=plus.value, **common)


def estimate_H(trajectory: Trajectory, n: int, cap: Optional[int] = None) -> EstimateReport:
    """
    Hitting-time estimator log(T^-_n / T^+_n) on a single trajectory.

    Args:
        trajectory: Observed trajectory
        n: Word length
        cap: Largest shift searched (default: as far as the data allows)

    Returns:
        EstimateReport; a lower bound when only T^- is censored
    """
    plus, minus = return_and_reverse_times(trajectory, n, cap)
    return _ratio_report("H", n, minus, plus)


def estimate_W(word_source: Trajectory, target: Trajectory, n: int, cap: Optional[int] = None) -> EstimateReport:
    """
    Waiting-time estimator log(W^-_n / W^+_n) on two independent trajectories.

    Args:
        word_source: Trajectory supplying the first n symbols
        target: Independent trajectory searched for both words
        n: Word length
        cap: Largest shift searched in ``target``

    Returns:
        EstimateReport
    """
    plus, minus = waiting_times(word_source, target, n, cap)
    return _ratio_report("W", n, minus, plus)


def estimate_H_stream(model: MarkovModel, seed: int, n: int, cap: int) -> Tuple[EstimateReport, np.ndarray]:
    """Hitting-time estimator on a lazily generated trajectory; also returns x_1..x_n."""
    prefix, plus, minus = stream_return_times(model, seed, n, cap)
    return _ratio_report("H", n, minus, plus), prefix


def estimate_W_stream(
    model: MarkovModel, source_seed: int, target_seed: int, n: int, cap: int
) -> Tuple[EstimateReport, np.ndarray]:
    """Waiting-time estimator with both trajectories generated lazily; also returns x_1..x_n."""
    prefix = simulate(model, max(n, model.order), source_seed).symbols[:n]
    plus, minus = stream_waiting_times(model, prefix, target_seed, cap)
    return _ratio_report("W", n, minus, plus), prefix


def estimate_dual(trajectory: Trajectory, n: int) -> EstimateReport:
    """Matching-time estimator log(L^+_n / L^-_n) over x_1..x_n (experimental)."""
    lengths = matching_lengths(trajectory, n)
    raw = log_ratio(lengths.plus, lengths.minus)
    return EstimateReport(
        estimator="dual",
        n=n,
        raw=raw,
        per_symbol=raw / n,
        experimental=True,
        numerator=lengths.plus,
        denominator=lengths.minus,
    )


def _entropy_report(n: int, plus: TimeRecord) -> EstimateReport:
    raw = math.log(plus.bound)
    return EstimateReport(
        estimator="entropy",
        n=n,
        raw=raw,
        per_symbol=raw / n,
        censored=plus.censored,
        bound="lower" if plus.censored else None,
        caps_used=plus.cap,
        numerator=plus.value,
    )


def estimate_entropy_rate(trajectory: Trajectory, n: int, cap: Optional[int] = None) -> EstimateReport:
    """Return-time entropy estimator log(T^+_n) / n; a lower bound when censored."""
    return _entropy_report(n, return_time(trajectory, n, cap))


def estimate_entropy_rate_stream(model: MarkovModel, seed: int, n: int, cap: int) -> Tuple[EstimateReport, np.ndarray]:
    """Return-time entropy estimator on a lazily generated trajectory; also returns x_1..x_n."""
    prefix, plus, _ = stream_return_times(model, seed, n, cap)
    return _entropy_report(n, plus), prefix


def sign_test(reports: Sequence[EstimateReport], alpha: float = DEFAULT_ALPHA, **params: Any) -> TestReport:
    """
    Exact two-sided binomial sign test of P(estimate > 0) = 1/2.

    Ties and reports whose sign censoring leaves undecided are dropped.
    """
    signs = [r.sign for r in reports]
    decided = [s for s in signs if s is not None]
    if reports and not decided:
        raise IndeterminateError("Every pair is censored-indeterminate")

    n_plus = sum(1 for s in decided if s > 0)
    n_minus = sum(1 for s in decided if s < 0)
    effective = n_plus + n_minus
    p_value = 1.0 if effective == 0 else float(stats.binomtest(n_plus, effective, 0.5).pvalue)
    p_value = min(p_value, 1.0)

    return TestReport(
        method="sign",
        statistic=float(n_plus),
        p_value=p_value,
        decision="reject_reversibility" if p_value < alpha else "no_evidence",
        params={
            **params,
            "M": len(reports),
            "alpha": alpha,
            "plus": n_plus,
            "minus": n_minus,
            "ties": len(decided) - effective,
            "undecided": len(reports) - len(decided),
        },
    )


def test_reversibility_sign(
    pairs: List[Tuple[Trajectory, Trajectory]],
    n: int,
    cap: Optional[int] = None,
    alpha: float = DEFAULT_ALPHA,
) -> TestReport:
    """
    Sign test on the waiting-time estimator over independent pairs.

    Args:
        pairs: At least 20 independent (word_source, target) pairs
        n: Word length
        cap: Search cap per pair
        alpha: Level

    Returns:
        TestReport with the exact binomial p-value
    """
    if len(pairs) < MIN_SIGN_PAIRS:
        raise ValidationError(f"Sign test needs at least {MIN_SIGN_PAIRS} pairs, got {len(pairs)}")
    reports = [estimate_W(source, target, n, cap) for source, target in pairs]
    return sign_test(reports, alpha=alpha, n=n, cap=cap)


def threshold_test(report: EstimateReport, c_thr: float) -> TestReport:
    """
    Reject reversibility when |estimate| > c_thr * log n.

    Under reversibility Ṡ_n stays bounded, so the hitting-time estimator is
    O(log n); under irreversibility it grows linearly in n.
    """
    threshold = c_thr * math.log(report.n)
    params = {"n": report.n, "cap": report.caps_used, "C_thr": c_thr, "threshold": threshold}

    if report.indeterminate:
        decision = "indeterminate"
    elif report.bound == "lower":
        decision = "reject_reversibility" if report.raw > threshold else "indeterminate"
    elif report.bound == "upper":
        decision = "reject_reversibility" if report.raw < -threshold else "indeterminate"
    else:
        decision = "reject_reversibility" if abs(report.raw) > threshold else "no_evidence"

    return TestReport(method="threshold", statistic=report.raw, decision=decision, params=params)


def test_reversibility_threshold(
    trajectory: Trajectory, n: int, cap: Optional[int] = None, c_thr: float = 10.0
) -> TestReport:
    """Threshold test on the hitting-time estimator of a single trajectory."""
    return threshold_test(estimate_H(trajectory, n, cap), c_thr)


def test_reversibility_sign_stream(
    model: MarkovModel,
    pairs: int,
    n: int,
    cap: int,
    alpha: float = DEFAULT_ALPHA,
    base_seed: int = 0,
) -> TestReport:
    """Sign test on ``pairs`` lazily generated pairs drawn from ``model``."""
    if pairs < MIN_SIGN_PAIRS:
        raise ValidationError(f"Sign test needs at least {MIN_SIGN_PAIRS} pairs, got {pairs}")
    logger.debug("Running sign test on %d pairs (n=%d, cap=%d)", pairs, n, cap)
    reports = []
    for i in range(pairs):
        source_seed = derive_seed(base_seed, "sign", i, "source")
        target_seed = derive_seed(base_seed, "sign", i, "target")
        reports.append(estimate_W_stream(model, source_seed, target_seed, n, cap)[0])
    return sign_test(reports, alpha=alpha, n=n, cap=cap)


def split_pairs(trajectory: Trajectory, pairs: int) -> List[Tuple[Trajectory, Trajectory]]:
    """Cut one observed trajectory into ``pairs`` consecutive (word_source, target) segment pairs."""
    if pairs < 1:
        raise ValidationError("Number of pairs must be >= 1")
    size = len(trajectory) // (2 * pairs)
    if size < 2:
        raise ValidationError(f"Trajectory of length {len(trajectory)} too short for {pairs} pairs")
    segments = [Trajectory(trajectory.symbols[i * size:(i + 1) * size]) for i in range(2 * pairs)]
    return list(zip(segments[0::2], segments[1::2]))
