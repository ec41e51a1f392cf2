import logging
from typing import Optional, Sequence, Union

import numpy as np

from core.errors import InvalidComparisonError, SeriesTooShortError
from core.schemas import StabilityReport
from diagnostics.limsup import limsup_estimate, tail_average
from filters.base_filter import FilterRun

logger = logging.getLogger("stability")

Runs = Union[FilterRun, Sequence[FilterRun]]


def separation_series(first: Runs, second: Runs) -> np.ndarray:
    """Replica-averaged |m1(t) - m2(t)|^2 for runs that share their noise."""
    first = [first] if isinstance(first, FilterRun) else list(first)
    second = [second] if isinstance(second, FilterRun) else list(second)
    if len(first) != len(second):
        raise InvalidComparisonError("stability check needs the same number of runs on both sides")
    series = []
    for a, b in zip(first, second):
        if a.lineage != b.lineage:
            raise InvalidComparisonError(f"noise lineage differs: {a.lineage} vs {b.lineage}")
        if a.means is None or b.means is None:
            raise InvalidComparisonError("stability check needs runs recorded with keep_means=True")
        n = min(len(a.means), len(b.means))
        series.append(np.sum((a.means[:n] - b.means[:n]) ** 2, axis=1))
    n = min(len(s) for s in series)
    return np.mean([s[:n] for s in series], axis=0)


def contraction_rate(times: np.ndarray, separation: np.ndarray, transient_fraction: float = 0.5) -> float:
    """Exponential decay rate fitted to log |m1 - m2|^2 over the transient; <= 0 means no contraction."""
    n = max(int(len(separation) * transient_fraction), 2)
    t, s = times[:n], separation[:n]
    keep = s > 0
    if keep.sum() < 2:
        return 0.0
    slope = np.polyfit(t[keep], np.log(s[keep]), 1)[0]
    return float(-slope)


def stability_check(first: Runs, second: Runs, energy_bound: Optional[float] = None,
                    tail_fraction: float = 0.5) -> StabilityReport:
    """Tail of E|m1 - m2|^2 against 2 E(sigma^2), plus the transient contraction rate."""
    separation = separation_series(first, second)
    times = (first if isinstance(first, FilterRun) else first[0]).times[:len(separation)]
    tail = tail_average(separation, tail_fraction)
    try:
        limsup = limsup_estimate(separation).limsup
    except SeriesTooShortError:
        limsup = None
    rate = contraction_rate(times, separation)
    bound = 2.0 * energy_bound if energy_bound is not None else None
    passed = None if bound is None else tail <= bound
    logger.info(f"stability: tail {tail:.4e}, bound {bound}, contraction rate {rate:.4g}")
    return StabilityReport(tail_mean=tail, limsup=limsup, bound=bound, contraction_rate=rate, passed=passed)
