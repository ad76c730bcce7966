"""
Statistics utilities and the trial runner shared by the validation suites.
"""

import logging
import math
import signal
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats

from hitrev.model import derive_seed

logger = logging.getLogger(__name__)

__all__ = [
    "TrialBatch",
    "derive_seed",
    "empirical_scgf",
    "ks_statistic",
    "log_tail_frequency",
    "mean_and_se",
    "run_trials",
]


def ks_statistic(sample: Sequence[float], cdf: Callable) -> float:
    """Sup-norm distance between the empirical CDF of ``sample`` and ``cdf``."""
    values = np.asarray(sample, dtype=float)
    if values.size == 0:
        raise ValueError("KS statistic of an empty sample")
    return float(stats.kstest(values, cdf).statistic)


def mean_and_se(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return float(arr.mean()) if arr.size else math.nan, math.nan
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def empirical_scgf(samples: Sequence[float], p: float, n: int) -> float:
    """(1/n) log of the sample mean of exp(p * S)."""
    arr = np.asarray(samples, dtype=float)
    return float((special.logsumexp(p * arr) - math.log(arr.size)) / n)


def log_tail_frequency(samples: Sequence[float], n: int, interval: Tuple[float, float]) -> float:
    """(1/n) log of the fraction of S/n inside ``interval``; -inf when none fall there."""
    rates = np.asarray(samples, dtype=float) / n
    lo, hi = interval
    hits = int(np.count_nonzero((rates >= lo) & (rates <= hi)))
    if hits == 0:
        return -math.inf
    return math.log(hits / rates.size) / n


@dataclass
class TrialBatch:
    """Results in trial-index order; ``incomplete`` when cancellation cut the batch short."""

    results: List[Any] = field(default_factory=list)
    incomplete: bool = False


def _ignore_sigint():
    signal.signal(signal.SIGINT, signal.SIG_IGN)


def run_trials(
    fn: Callable,
    tasks: Sequence[Any],
    workers: int = 1,
    cancel: Optional[threading.Event] = None,
) -> TrialBatch:
    """
    Run ``fn(task)`` for every task.

    Args:
        fn: Picklable top-level function when ``workers > 1``
        tasks: One argument per trial
        workers: Process count; 1 runs serially in this process
        cancel: When set, remaining trials are skipped

    Returns:
        TrialBatch with results ordered by task index
    """
    batch = TrialBatch()
    if workers <= 1:
        for task in tasks:
            if cancel is not None and cancel.is_set():
                batch.incomplete = True
                break
            batch.results.append(fn(task))
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_ignore_sigint) as pool:
            futures = [pool.submit(fn, task) for task in tasks]
            for i, future in enumerate(futures):
                if cancel is not None and cancel.is_set():
                    for pending in futures[i:]:
                        pending.cancel()
                    batch.incomplete = True
                    break
                batch.results.append(future.result())
    if batch.incomplete:
        logger.warning("Cancelled after %d of %d trials", len(batch.results), len(tasks))
    return batch
