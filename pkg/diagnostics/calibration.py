"""Empirical interpolation and Ladyzhenskaya constants over a corpus of random smooth fields."""
import logging
import math
from typing import Optional

import numpy as np

from core.rng import NoiseStreams
from core.schemas import CalibrationResult
from core.spectral import grid_norm_L4
from dynamics.base import DissipativeSystem
from dynamics.navier_stokes import NavierStokes2D
from observations.operators import ModalObservation, ObservationOperator

logger = logging.getLogger("calibration")

MIN_CORPUS = 500


def resolution_for(system: DissipativeSystem, op: ObservationOperator) -> float:
    """The h entering |u - I_h u| <= c2 h |u|_V."""
    if not isinstance(system, NavierStokes2D):
        return 1.0 / math.sqrt(system.dissipation_rate)
    if isinstance(op, ModalObservation) and op.tail_resolution is not None:
        return op.tail_resolution
    return op.h


def interpolation_ratios(system: DissipativeSystem, op: ObservationOperator, corpus: np.ndarray, h: float):
    """Per-field |I_h u| / |u| and |u - I_h u| / (h |u|_V)."""
    norms = np.linalg.norm(corpus, axis=1)
    Iu = op.interpolate(corpus)
    v_norms = np.sqrt(np.einsum("ij,ij->i", corpus, system.apply_A(corpus)))
    residual = np.linalg.norm(corpus - Iu, axis=1)
    if h == 0:
        # every mode observed: nothing left to interpolate
        return np.linalg.norm(Iu, axis=1) / norms, np.zeros_like(norms)
    return np.linalg.norm(Iu, axis=1) / norms, residual / (h * v_norms)


def ladyzhenskaya_ratios(system: NavierStokes2D, corpus: np.ndarray) -> np.ndarray:
    """|u|_{L4}^2 / (|u|_H |u|_V) per field."""
    grid = system.grid
    out = np.empty(corpus.shape[0])
    for i, a in enumerate(corpus):
        values = system.spectrum.to_grid(a)
        out[i] = grid_norm_L4(values, grid) ** 2 / (system.norm_H(a) * system.norm_V(a))
    return out


def random_corpus(system: DissipativeSystem, size: int, seed: int, slope: float = 1.5) -> np.ndarray:
    rng = NoiseStreams(seed).generator("corpus", 0, 0)
    if isinstance(system, NavierStokes2D):
        return system.spectrum.random_coordinates(rng, slope, size=size)
    return rng.standard_normal((size, system.dim))


def calibrate_constants(system: DissipativeSystem, op: ObservationOperator, corpus_size: int = MIN_CORPUS,
                        seed: int = 0, slope: float = 1.5, corpus: Optional[np.ndarray] = None) -> CalibrationResult:
    """
    Smallest c1, c2, c_L consistent with the corpus. Orthogonal-projection
    operators take c1 = 1; finite-dimensional systems take c_L = c_B / c_A.
    """
    if corpus is None:
        if corpus_size < MIN_CORPUS:
            raise ValueError(f"calibration corpus needs at least {MIN_CORPUS} fields (got {corpus_size})")
        corpus = random_corpus(system, corpus_size, seed, slope)
    h = resolution_for(system, op)
    c1_ratios, c2_ratios = interpolation_ratios(system, op, corpus, h)
    c1 = 1.0 if op.is_orthogonal_projection else float(np.max(c1_ratios))
    c2 = float(np.max(c2_ratios))
    if isinstance(system, NavierStokes2D):
        c_L = float(np.max(ladyzhenskaya_ratios(system, corpus)))
        tail = getattr(op, "tail_resolution", None)
    else:
        c_L = system.quadratic_bound / system.dissipation_rate
        tail = None
        slope = 0.0
    logger.info(f"calibrated c1={c1:.4f}, c2={c2:.4f}, c_L={c_L:.4f} on {corpus.shape[0]} fields (h={h:.4g})")
    return CalibrationResult(
        c1=c1,
        c2=c2,
        c_L=c_L,
        corpus_size=int(corpus.shape[0]),
        corpus_slope=slope,
        seed=seed,
        h=h,
        tail_resolution=tail,
    )
