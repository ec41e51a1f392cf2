import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from core.errors import SpinUpFailedError
from core.rng import NoiseStreams
from dynamics.base import DissipativeSystem

logger = logging.getLogger("trajectory")

SPIN_UP_WINDOW = 0.2
ABSORBING_SLACK = 1.1
STOCHASTIC_SLACK = 2.0


@dataclass
class TruthTrajectory:
    times: np.ndarray
    states: np.ndarray
    dt: float
    t0: float
    grashof: float
    M_u: float = 0.0
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def after_spin_up(self) -> "TruthTrajectory":
        keep = self.times >= self.t0 - 1e-12
        return TruthTrajectory(self.times[keep], self.states[keep], self.dt, self.t0, self.grashof, self.M_u, dict(self.meta))


def integrate(system: DissipativeSystem, u0: np.ndarray, n_steps: int, dt: float,
              streams: Optional[NoiseStreams] = None, t_start: float = 0.0, step_offset: int = 0) -> TruthTrajectory:
    """Run the truth integrator for n_steps and keep every state."""
    u = system.check_state(u0).copy()
    states = np.empty((n_steps + 1, system.dim))
    states[0] = u
    noisy = system.stochastic and streams is not None
    for j in range(n_steps):
        dW = streams.increment("truth", 0, step_offset + j, system.dim, dt) if noisy else None
        u = system.guarded_step(u, dt, step=step_offset + j, dW=dW)
        states[j + 1] = u
    times = t_start + dt * np.arange(n_steps + 1)
    traj = TruthTrajectory(times, states, dt, t_start, system.grashof)
    traj.M_u = max_norm_V(system, states)
    return traj


def max_norm_V(system: DissipativeSystem, states: np.ndarray) -> float:
    return math.sqrt(max(float(np.max(np.einsum("ij,ij->i", states, system.apply_A(states)))), 0.0))


def absorbing_ratios(system: DissipativeSystem, states: np.ndarray):
    """Per-state |u|_H^2 and |u|_V^2 divided by the absorbing radii (zero forcing gives ratio 0)."""
    h_bound, v_bound = system.absorbing_bounds()
    energy = np.einsum("ij,ij->i", states, states)
    enstrophy = np.einsum("ij,ij->i", states, system.apply_A(states))
    if h_bound <= 0:
        return np.zeros_like(energy), np.zeros_like(enstrophy)
    return energy / h_bound, enstrophy / v_bound


def spin_up(system: DissipativeSystem, u0: np.ndarray, horizon: float, dt: float,
            streams: Optional[NoiseStreams] = None, slack: float = ABSORBING_SLACK) -> TruthTrajectory:
    """
    Integrate until `horizon` and locate the spin-up time t0: the earliest time
    after which the state stays inside the (slackened) absorbing ball. The last
    20% of the horizon must lie inside the ball; unforced systems must instead
    decay monotonically. Stochastic truth is held to the expectation-level ball
    with an extra STOCHASTIC_SLACK for pathwise excursions.
    """
    n_steps = max(int(round(horizon / dt)), 1)
    traj = integrate(system, u0, n_steps, dt, streams)
    if system.forcing_norm == 0 and not system.stochastic:
        energy = np.einsum("ij,ij->i", traj.states, traj.states)
        if np.any(np.diff(energy) > 1e-12 * max(energy[0], 1.0)):
            raise SpinUpFailedError("unforced energy failed to decay", horizon, float(np.max(energy) / max(energy[0], 1e-300)))
        traj.t0 = 0.0
        traj.M_u = max_norm_V(system, traj.states)
        traj.meta["energy_envelope_ratio"] = energy_envelope_ratio(system, traj)
        return traj

    if not math.isfinite(system.absorbing_bounds()[0]):
        raise SpinUpFailedError(f"{system.name}: no absorbing ball, multiplicative noise outweighs dissipation",
                                horizon, math.inf)
    if system.stochastic:
        slack = slack * STOCHASTIC_SLACK
    e_ratio, v_ratio = absorbing_ratios(system, traj.states)
    inside = (e_ratio <= slack) & (v_ratio <= slack)
    window = max(int(math.ceil(SPIN_UP_WINDOW * (n_steps + 1))), 1)
    if not np.all(inside[-window:]):
        worst = float(max(np.max(e_ratio[-window:]), np.max(v_ratio[-window:])))
        raise SpinUpFailedError(
            f"{system.name}: absorbing ball not reached within horizon {horizon} (worst ratio {worst:.3f})",
            horizon, worst,
        )
    outside = np.nonzero(~inside)[0]
    first = 0 if outside.size == 0 else int(outside[-1]) + 1
    traj.t0 = float(traj.times[first])
    traj.M_u = max_norm_V(system, traj.states[first:])
    traj.meta.update(
        max_energy_ratio=float(np.max(e_ratio[first:])),
        max_enstrophy_ratio=float(np.max(v_ratio[first:])),
    )
    if not system.stochastic:
        traj.meta["energy_envelope_ratio"] = energy_envelope_ratio(system, traj)
    logger.info(f"{system.name}: spin-up t0={traj.t0:.3f}, G={traj.grashof:.4g}, M_u={traj.M_u:.4g}")
    return traj


def energy_envelope_ratio(system: DissipativeSystem, traj: TruthTrajectory) -> float:
    """max_t |u(t)|^2 / envelope(t) from the first state; at most 1 up to discretisation error."""
    energy = np.einsum("ij,ij->i", traj.states, traj.states)
    envelope = system.energy_envelope(float(energy[0]), traj.times - traj.times[0])
    positive = envelope > 0
    if not np.any(positive):
        return 0.0
    return float(np.max(energy[positive] / envelope[positive]))


def time_integral_ratio(system: DissipativeSystem, traj: TruthTrajectory, window: Optional[float] = None) -> float:
    """
    Largest int_t^{t+T} |u|_V^2 over sliding windows of length T (default 1/(nu lambda_1),
    capped at the trajectory length) divided by time_integral_bound(T, |u(t)|^2).
    """
    horizon = float(traj.times[-1] - traj.times[0])
    if horizon <= 0:
        return 0.0
    T = min(window or 1.0 / system.dissipation_rate, horizon)
    n = max(int(round(T / traj.dt)), 1)
    enstrophy = np.einsum("ij,ij->i", traj.states, system.apply_A(traj.states))
    energy = np.einsum("ij,ij->i", traj.states, traj.states)
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (enstrophy[1:] + enstrophy[:-1]) * traj.dt)])
    starts = np.arange(0, len(enstrophy) - n)
    if starts.size == 0:
        return 0.0
    integrals = cumulative[starts + n] - cumulative[starts]
    bounds = system.time_integral_bound(n * traj.dt, energy[starts])
    return float(np.max(integrals / bounds))


def energy_balance_residual(system: DissipativeSystem, traj: TruthTrajectory) -> float:
    """
    Relative residual of |u(T)|^2 - |u(0)|^2 + 2 nu int |u|_V^2 - 2 int <f, u> (trapezoid rule).
    The bilinear term drops out, so this vanishes up to time-discretisation error.
    """
    s = traj.states
    energy = np.einsum("ij,ij->i", s, s)
    dissipation = 2.0 * system.nu * np.einsum("ij,ij->i", s, system.apply_A(s))
    work = 2.0 * s @ system.forcing
    integrand = dissipation - work
    integral = float(np.sum(0.5 * (integrand[1:] + integrand[:-1])) * traj.dt)
    residual = energy[-1] - energy[0] + integral
    scale = abs(energy[-1]) + abs(energy[0]) + float(np.sum(np.abs(integrand))) * traj.dt
    return abs(residual) / scale if scale > 0 else 0.0


# --- persistence ---

def save_trajectory(traj: TruthTrajectory, directory: Union[str, Path], chunk_size: int = 1000,
                    meta: Optional[Dict[str, Any]] = None) -> Path:
    """Chunked .npy snapshots plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    chunks = []
    for i, start in enumerate(range(0, traj.states.shape[0], chunk_size)):
        name = f"chunk_{i:04d}.npy"
        np.save(directory / name, traj.states[start:start + chunk_size])
        chunks.append({"file": name, "start": start, "count": int(min(chunk_size, traj.states.shape[0] - start))})
    manifest = {
        "dt": traj.dt,
        "t_start": float(traj.times[0]),
        "t0": traj.t0,
        "grashof": traj.grashof,
        "M_u": traj.M_u,
        "n_states": int(traj.states.shape[0]),
        "dimension": int(traj.states.shape[1]),
        "chunks": chunks,
        **traj.meta,
        **(meta or {}),
    }
    path = directory / "manifest.json"
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    os.replace(tmp, path)
    return path


def load_trajectory(directory: Union[str, Path]) -> TruthTrajectory:
    directory = Path(directory)
    with open(directory / "manifest.json") as f:
        manifest = json.load(f)
    states = np.concatenate([np.load(directory / c["file"]) for c in manifest["chunks"]])
    times = manifest["t_start"] + manifest["dt"] * np.arange(states.shape[0])
    return TruthTrajectory(times, states, manifest["dt"], manifest["t0"], manifest["grashof"], manifest["M_u"])
