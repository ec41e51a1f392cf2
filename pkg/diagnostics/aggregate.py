import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from core.errors import SeriesTooShortError
from core.schemas import BoundReport, EstimateSummary, ReplicaFault, ReplicaResult, RunStatus
from diagnostics.limsup import limsup_estimate, tail_average
from filters.base_filter import FilterRun

logger = logging.getLogger("aggregate")


@dataclass
class ReplicaOutcome:
    replica: int
    run: Optional[FilterRun] = None
    fault: Optional[ReplicaFault] = None

    @property
    def usable(self) -> bool:
        return self.run is not None and self.fault is None


class ReplicaAggregator:
    """
    Deterministic reduction of replica runs to expectation estimates.
    Replicas are always combined in replica order.
    """

    @staticmethod
    def mean_series(outcomes: List[ReplicaOutcome], column: str = "err_H2") -> Tuple[np.ndarray, np.ndarray]:
        runs = [o.run for o in sorted(outcomes, key=lambda o: o.replica) if o.usable]
        if not runs:
            return np.empty(0), np.empty(0)
        n = min(len(r.times) for r in runs)
        stacked = np.stack([r.series[column][:n] for r in runs])
        return runs[0].times[:n], stacked.mean(axis=0)

    @staticmethod
    def aggregate(outcomes: List[ReplicaOutcome], report: Optional[BoundReport], nu: float = 1.0) -> EstimateSummary:
        usable = [o for o in sorted(outcomes, key=lambda o: o.replica) if o.usable]
        if not usable:
            return EstimateSummary(theoretical_bound=report.bound if report else None)

        _, mean_H = ReplicaAggregator.mean_series(usable, "err_H2")
        _, mean_V = ReplicaAggregator.mean_series(usable, "err_V2")
        try:
            est = limsup_estimate(mean_H)
            limsup, tail = est.limsup, est.tail_mean
        except SeriesTooShortError as e:
            logger.warning(f"{e}; reporting the tail mean only")
            limsup, tail = None, tail_average(mean_H)

        per_replica = np.array([tail_average(o.run.series["err_H2"]) for o in usable])
        se = float(per_replica.std(ddof=1) / np.sqrt(per_replica.size)) if per_replica.size > 1 else None

        bound = report.bound if report else None
        reference = limsup if limsup is not None else tail
        passed = None if bound is None else bool(reference <= bound)
        return EstimateSummary(
            limsup=limsup,
            tail_mean=tail,
            standard_error=se,
            theoretical_bound=bound,
            passed=passed,
            enstrophy_average=nu * tail_average(mean_V),
            enstrophy_bound=report.enstrophy_bound if report else None,
        )

    @staticmethod
    def replica_results(outcomes: List[ReplicaOutcome]) -> List[ReplicaResult]:
        results = []
        for o in sorted(outcomes, key=lambda o: o.replica):
            tail = limsup = None
            steps = 0
            if o.run is not None:
                steps = o.run.steps_completed
                series = o.run.series.get("err_H2", np.empty(0))
                if series.size:
                    tail = tail_average(series)
                    try:
                        limsup = limsup_estimate(series).limsup
                    except SeriesTooShortError:
                        pass
            results.append(ReplicaResult(replica=o.replica, steps_completed=steps, tail_mean=tail,
                                         limsup=limsup, fault=o.fault))
        return results

    @staticmethod
    def status(outcomes: List[ReplicaOutcome], report: Optional[BoundReport], estimate: EstimateSummary) -> RunStatus:
        faults = [o.fault for o in outcomes if o.fault is not None]
        unexpected = [f for f in faults if f.fault_type != "DIVERGED"]
        if unexpected:
            return RunStatus.SYSTEM_ERROR if len(unexpected) == len(outcomes) else RunStatus.PARTIAL_FAILURE
        if report is not None and not report.guaranteed:
            return RunStatus.BOUND_NOT_GUARANTEED
        if faults:
            return RunStatus.FILTER_DIVERGED
        if estimate.passed is False:
            return RunStatus.BOUND_VIOLATED
        return RunStatus.SUCCESS

    @staticmethod
    def series_frame(outcomes: List[ReplicaOutcome]) -> pd.DataFrame:
        frames = [o.run.to_frame(o.replica) for o in sorted(outcomes, key=lambda o: o.replica) if o.run is not None]
        if not frames:
            return pd.DataFrame(columns=["t", "replica", "err_H2", "err_V2", "mean_err_H2", "spread", "damping", "diverged"])
        return pd.concat(frames, ignore_index=True)
