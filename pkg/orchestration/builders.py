"""Turn an ExperimentConfig into live systems, operators, covariances and filters."""
import logging
import math
from typing import Optional

import numpy as np

from core.rng import NoiseStreams
from core.schemas import ExperimentConfig, FilterKind, ObservationKind, SystemKind
from core.spectral import SpectralGrid
from covariance.operators import CovarianceOperator, background_covariance
from dynamics.base import DissipativeSystem
from dynamics.lorenz import Lorenz63, Lorenz96
from dynamics.navier_stokes import NavierStokes2D
from filters.base_filter import BaseFilter, initial_condition
from filters.enkf import EnKFFilter
from filters.ensrkf import EnSRKFFilter
from filters.nudging import NudgingFilter
from filters.threedvar import ThreeDVarFilter
from observations.noise import ObservationPath
from observations.operators import ModalObservation, ObservationOperator, VolumeObservation

logger = logging.getLogger("builders")

# norm of the truth initial state, relative to the absorbing radius
TRUTH_INIT_FRACTION = 0.5


def build_system(config: ExperimentConfig) -> DissipativeSystem:
    spec = config.system
    if spec.kind == SystemKind.NSE:
        grid = SpectralGrid(spec.n, spec.domain_size)
        return NavierStokes2D(grid, nu=spec.nu, grashof=spec.grashof, forcing_shell=spec.forcing_shell)
    if spec.kind == SystemKind.LORENZ63:
        return Lorenz63(spec.alpha, spec.beta, spec.gamma, spec.rho,
                        noise_additive=spec.noise_additive, noise_multiplicative=spec.noise_multiplicative)
    return Lorenz96(spec.dimension, spec.forcing,
                    noise_additive=spec.noise_additive, noise_multiplicative=spec.noise_multiplicative)


def build_operator(config: ExperimentConfig, system: DissipativeSystem) -> ObservationOperator:
    spec = config.observation
    if isinstance(system, NavierStokes2D):
        if spec.kind == ObservationKind.VOLUME:
            return VolumeObservation(system.spectrum, spec.cells)
        return ModalObservation.from_shell(system.spectrum, spec.max_wavenumber_sq)
    h = 1.0 / np.sqrt(system.dissipation_rate)
    return ModalObservation.from_stride(system.dim, spec.stride, spec.offset, resolution=h)


def eigenvalues_of(system: DissipativeSystem) -> np.ndarray:
    if isinstance(system, NavierStokes2D):
        return system.eigenvalues
    return np.linalg.eigvalsh(0.5 * (system.matrix + system.matrix.T))


def build_covariance(config: ExperimentConfig, system: DissipativeSystem,
                     op: ObservationOperator) -> Optional[CovarianceOperator]:
    if config.filter.kind != FilterKind.THREEDVAR:
        return None
    return background_covariance(config.filter.covariance, op, eigenvalues_of(system))


def build_filter(config: ExperimentConfig, system: DissipativeSystem, op: ObservationOperator,
                 covariance: Optional[CovarianceOperator] = None) -> BaseFilter:
    spec = config.filter
    sigma = config.observation.sigma
    factor = config.divergence_factor
    if spec.kind == FilterKind.THREEDVAR:
        if covariance is None:
            covariance = build_covariance(config, system, op)
        return ThreeDVarFilter(system, op, sigma, covariance, divergence_factor=factor)
    if spec.kind == FilterKind.NUDGING:
        return NudgingFilter(system, op, sigma, spec.nudging_mu, divergence_factor=factor)
    if spec.kind == FilterKind.ENKF:
        return EnKFFilter(system, op, sigma, spec.inflation, divergence_factor=factor)
    return EnSRKFFilter(system, op, sigma, spec.inflation, divergence_factor=factor)


def ensemble_members(config: ExperimentConfig) -> int:
    return config.filter.ensemble_size if config.filter.kind in (FilterKind.ENKF, FilterKind.ENSRKF) else 0


def truth_initial_state(config: ExperimentConfig, system: DissipativeSystem) -> np.ndarray:
    rng = NoiseStreams(config.seeds.truth).generator("truth", member=1, step=0)
    radius = system.absorbing_radius
    norm = TRUTH_INIT_FRACTION * radius if 0 < radius < math.inf else 1.0
    return system.random_state(rng, norm)


def build_path(config: ExperimentConfig, op: ObservationOperator, truth: np.ndarray, dt: float,
               replica: int, t_start: float = 0.0) -> ObservationPath:
    seeds = config.seeds
    return ObservationPath(
        op=op,
        truth=truth,
        dt_truth=dt,
        sigma=config.observation.sigma,
        streams=NoiseStreams(seeds.obs_noise, replica),
        members=ensemble_members(config),
        t_start=t_start,
        meta={"label": config.label, "replica": replica},
        perturb_streams=NoiseStreams(seeds.filter_noise, replica),
    )


def build_initial(config: ExperimentConfig, system: DissipativeSystem, u0: np.ndarray, replica: int,
                  offset: Optional[float] = None) -> np.ndarray:
    spec = config.filter
    streams = NoiseStreams(config.seeds.ensemble_init, replica)
    return initial_condition(
        system,
        u0,
        streams,
        offset=spec.init_offset if offset is None else offset,
        spread=spec.init_spread,
        members=ensemble_members(config),
    )
