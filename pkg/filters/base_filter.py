import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from core.errors import FilterDivergenceError
from core.rng import NoiseStreams
from dynamics.base import DissipativeSystem
from observations.noise import ObservationIncrement, ObservationPath
from observations.operators import ObservationOperator

SERIES_COLUMNS = ["err_H2", "err_V2", "mean_err_H2", "spread", "damping"]


@dataclass
class FilterRun:
    name: str
    times: np.ndarray
    series: Dict[str, np.ndarray]
    final: np.ndarray
    steps_completed: int
    diverged: bool = False
    divergence: Optional[Dict[str, float]] = None
    means: Optional[np.ndarray] = None
    lineage: tuple = ()

    def to_frame(self, replica: int = 0) -> pd.DataFrame:
        frame = pd.DataFrame({"t": self.times, **self.series})
        frame.insert(1, "replica", replica)
        frame["diverged"] = False
        if self.diverged and len(frame):
            frame.loc[frame.index[-1], "diverged"] = True
        return frame


class BaseFilter:
    """
    Base class for continuous-time filters.

    One step is m' = Psi_dt(m) + exp(-nu A dt) K(m), where Psi_dt is the truth
    integrator and K(m) the filter's control and noise increment. Filters never
    draw noise themselves; increments arrive with the observation path.
    """

    ensemble = False

    def __init__(self, name: str, system: DissipativeSystem, op: ObservationOperator, sigma: float,
                 divergence_factor: float = 1e3):
        self.name = name
        self.logger = logging.getLogger(name)
        self.system = system
        self.op = op
        self.sigma = float(sigma)
        self.threshold = divergence_factor * max(system.absorbing_radius, 1.0)

    def correction(self, state: np.ndarray, innovation: np.ndarray, inc: ObservationIncrement) -> np.ndarray:
        """Control drift plus observation noise over one step, before the integrating factor."""
        raise NotImplementedError("Filters must implement correction")

    def step(self, state: np.ndarray, inc: ObservationIncrement) -> np.ndarray:
        innovation = self.op.observe(state) - inc.observed
        forecast = self.system.step(state, inc.dt)
        return forecast + self.system.propagate(self.correction(state, innovation, inc), inc.dt)

    def error_step(self, errors: np.ndarray, inc: ObservationIncrement) -> np.ndarray:
        """Step the error equation e = m - u directly (deterministic truth)."""
        u = inc.truth
        if errors.ndim == 2:
            model = np.stack([self.system.step_perturbation(u, e, inc.dt) for e in errors])
        else:
            model = self.system.step_perturbation(u, errors, inc.dt)
        innovation = self.op.observe(errors)
        return model + self.system.propagate(self.correction(errors, innovation, inc), inc.dt)

    @staticmethod
    def mean(state: np.ndarray) -> np.ndarray:
        return state.mean(axis=0) if state.ndim == 2 else state

    def check_divergence(self, state: np.ndarray, step: int) -> None:
        norms = np.linalg.norm(np.atleast_2d(state), axis=-1)
        worst = float(np.max(norms)) if np.all(np.isfinite(norms)) else math.inf
        if worst > self.threshold:
            raise FilterDivergenceError(
                f"{self.name}: |m|_H = {worst:.3e} exceeds {self.threshold:.3e} at step {step}",
                step=step, norm=worst, threshold=self.threshold,
            )

    def spread(self, state: np.ndarray) -> float:
        return 0.0

    @property
    def last_damping(self) -> float:
        return 0.0

    def diagnostics(self, state: np.ndarray, truth: np.ndarray) -> Dict[str, float]:
        e = np.atleast_2d(state) - truth
        e_mean = self.mean(state) - truth
        return {
            "err_H2": float(np.mean(np.sum(e ** 2, axis=1))),
            "err_V2": float(np.mean(np.sum(e * self.system.apply_A(e), axis=1))),
            "mean_err_H2": float(np.dot(e_mean, e_mean)),
            "spread": self.spread(state),
            "damping": self.last_damping,
        }

    def run(self, initial: np.ndarray, path: ObservationPath, record_every: int = 1,
            keep_means: bool = False) -> FilterRun:
        state = np.array(initial, dtype=float)
        rows: Dict[str, List[float]] = defaultdict(list)
        times: List[float] = []
        means: List[np.ndarray] = []

        def record(j: int, s: np.ndarray):
            times.append(path.t_start + j * path.dt)
            for key, value in self.diagnostics(s, path.truth[j * path.stride]).items():
                rows[key].append(value)
            if keep_means:
                means.append(self.mean(s).copy())

        record(0, state)
        completed = 0
        divergence = None
        for inc in path:
            try:
                state = self.step(state, inc)
                self.check_divergence(state, inc.step)
            except FilterDivergenceError as e:
                self.logger.warning(f"{self.name} diverged: {e}")
                divergence = {"step": e.step, "norm": e.norm, "threshold": e.threshold}
                break
            completed = inc.step + 1
            if completed % record_every == 0 or completed == path.n_steps:
                record(completed, state)

        return FilterRun(
            name=self.name,
            times=np.asarray(times),
            series={k: np.asarray(v) for k, v in rows.items()},
            final=state,
            steps_completed=completed,
            diverged=divergence is not None,
            divergence=divergence,
            means=np.asarray(means) if keep_means else None,
            lineage=path.lineage,
        )


def initial_condition(system: DissipativeSystem, u0: np.ndarray, streams: NoiseStreams, offset: float,
                      spread: float = 0.0, members: int = 0) -> np.ndarray:
    """u0 displaced by `offset` in H; ensembles scatter `spread` around that centre."""
    center = np.array(u0, dtype=float)
    if offset:
        center = center + system.random_state(streams.generator("init", 0, 0), offset)
    if not members:
        return center
    if not spread:
        return np.tile(center, (members, 1))
    return np.stack([
        center + system.random_state(streams.generator("init", k + 1, 0), spread) for k in range(members)
    ])
