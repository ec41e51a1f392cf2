import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Tuple, Union

import numpy as np
import pandas as pd

from core.errors import ObservationError
from core.rng import NoiseStreams
from observations.operators import ObservationOperator

logger = logging.getLogger("observations")


@dataclass
class Observation:
    y: np.ndarray
    t: float
    gamma: np.ndarray
    lineage: Tuple[int, ...] = ()


def observation_covariance(rank: int, sigma: Optional[float] = None, gamma: Optional[np.ndarray] = None,
                           dt: Optional[float] = None, nudging: bool = False) -> np.ndarray:
    """Gamma = sigma^2 I, or sigma^2/dt I for the discrete scaling of the continuous limit."""
    if gamma is not None:
        gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
        if gamma.shape != (rank, rank) or not np.allclose(gamma, gamma.T):
            raise ObservationError("Gamma must be a symmetric q x q matrix")
        if np.linalg.eigvalsh(gamma)[0] <= 0:
            raise ObservationError("Gamma must be positive definite")
        return gamma
    if sigma is None or sigma < 0 or (sigma == 0 and not nudging):
        raise ObservationError(f"observation noise level must be positive (got sigma={sigma})")
    scale = sigma ** 2 / dt if dt else sigma ** 2
    return scale * np.eye(rank)


def make_observation(op: ObservationOperator, u: np.ndarray, rng: np.random.Generator, t: float = 0.0,
                     sigma: Optional[float] = None, gamma: Optional[np.ndarray] = None,
                     dt: Optional[float] = None, nudging: bool = False,
                     lineage: Tuple[int, ...] = ()) -> Observation:
    """y = O u + xi with xi ~ N(0, Gamma) drawn from the caller's generator."""
    Gamma = observation_covariance(op.rank, sigma, gamma, dt, nudging)
    clean = op.observe(u)
    if not np.any(Gamma):
        return Observation(clean, t, Gamma, lineage)
    root = np.linalg.cholesky(Gamma)
    xi = root @ rng.standard_normal(op.rank)
    return Observation(clean + xi, t, Gamma, lineage)


@dataclass
class ObservationIncrement:
    """
    What a filter sees over [t, t + dt]: the observed truth O u(t) and the
    Gaussian increments driving dη = O u dt + σ dW. `truth` is carried for
    error diagnostics only.
    """

    step: int
    t: float
    dt: float
    observed: np.ndarray
    dW: np.ndarray
    dB: Optional[np.ndarray] = None
    truth: Optional[np.ndarray] = None


@dataclass
class ObservationPath:
    """
    Lazily generated observation path on top of a stored truth trajectory.

    With stride s > 1 the path runs on the coarse step s * dt_truth and its
    increments are sums of the s fine increments, so paths at different
    resolutions share the same underlying Brownian motion.
    """

    op: ObservationOperator
    truth: np.ndarray
    dt_truth: float
    sigma: float
    streams: NoiseStreams
    members: int = 0
    stride: int = 1
    t_start: float = 0.0
    meta: Dict[str, Any] = field(default_factory=dict)
    perturb_streams: Optional[NoiseStreams] = None

    @property
    def dt(self) -> float:
        return self.stride * self.dt_truth

    @property
    def n_steps(self) -> int:
        return (self.truth.shape[0] - 1) // self.stride

    @property
    def lineage(self) -> Tuple[int, int]:
        return self.streams.lineage

    def _fine(self, role: str, member: int, fine_step: int) -> np.ndarray:
        streams = self.perturb_streams if role == "perturb" and self.perturb_streams is not None else self.streams
        return streams.increment(role, member, fine_step, self.op.rank, self.dt_truth)

    def _aggregate(self, role: str, member: int, step: int) -> np.ndarray:
        first = step * self.stride
        total = self._fine(role, member, first)
        for i in range(1, self.stride):
            total = total + self._fine(role, member, first + i)
        return total

    def increment(self, step: int) -> ObservationIncrement:
        u = self.truth[step * self.stride]
        dW = self._aggregate("obs", 0, step)
        dB = None
        if self.members:
            dB = np.stack([self._aggregate("perturb", k, step) for k in range(self.members)])
        return ObservationIncrement(
            step=step,
            t=self.t_start + step * self.dt,
            dt=self.dt,
            observed=self.op.observe(u),
            dW=dW,
            dB=dB,
            truth=u,
        )

    def __iter__(self) -> Iterator[ObservationIncrement]:
        for j in range(self.n_steps):
            yield self.increment(j)

    def coarsened(self, factor: int) -> "ObservationPath":
        return ObservationPath(self.op, self.truth, self.dt_truth, self.sigma, self.streams,
                               self.members, self.stride * factor, self.t_start, dict(self.meta), self.perturb_streams)

    def observed_signal(self, inc: ObservationIncrement) -> np.ndarray:
        """dη/dt for one step: O u + σ dW/dt."""
        return inc.observed + self.sigma * inc.dW / inc.dt


def write_observation_log(path: ObservationPath, directory: Union[str, Path], every: int = 1,
                          max_rows: Optional[int] = None) -> Path:
    """CSV of (t, y_1..y_q) plus a JSON sidecar with the operator spec, Gamma and seed lineage."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for j in range(0, path.n_steps, every):
        inc = path.increment(j)
        rows.append([inc.t, *path.observed_signal(inc)])
        if max_rows and len(rows) >= max_rows:
            break
    columns = ["t"] + [f"y_{i + 1}" for i in range(path.op.rank)]
    csv_path = directory / "observations.csv"
    pd.DataFrame(rows, columns=columns).to_csv(csv_path, index=False)
    sidecar = {
        "operator": path.op.describe(),
        "sigma": path.sigma,
        "gamma": "sigma^2 I (continuous path, increments N(0, dt I))",
        "dt": path.dt,
        "every": every,
        "seed": path.streams.seed,
        "replica": path.streams.replica,
        **path.meta,
    }
    tmp = str(directory / "observations.json") + ".tmp"
    with open(tmp, "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
    os.replace(tmp, directory / "observations.json")
    logger.info(f"Wrote {len(rows)} observation rows to {csv_path}")
    return csv_path
