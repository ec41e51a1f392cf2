import math
from typing import Optional

import numpy as np

from core.spectral import SpectralField, SpectralGrid, StokesSpectrum, bilinear_B
from dynamics.base import DissipativeSystem


def kolmogorov_forcing(spectrum: StokesSpectrum, shell: int, amplitude: float) -> np.ndarray:
    """Single-mode forcing amplitude * sqrt(2)/L sin(k_f y) x-hat, |f|_H = amplitude."""
    f = np.zeros(spectrum.dimension)
    if amplitude:
        # e_k = (-1, 0) for k = (0, k_f), hence the sign
        f[spectrum.mode_index(0, shell, "sin")] = -amplitude
    return f


class NavierStokes2D(DissipativeSystem):
    """Incompressible 2D Navier-Stokes on the periodic square in Stokes-eigenbasis coordinates."""

    name = "navier_stokes"

    def __init__(self, grid: SpectralGrid, nu: float, grashof: float = 0.0, forcing_shell: int = 4,
                 forcing: Optional[np.ndarray] = None):
        self.grid = grid
        self.spectrum = StokesSpectrum(grid)
        self.forcing_shell = forcing_shell
        if forcing is None:
            amplitude = grashof * nu ** 2 * self.spectrum.lambda_1
            forcing = kolmogorov_forcing(self.spectrum, forcing_shell, amplitude)
        super().__init__(self.spectrum.dimension, nu, forcing)
        self.eigenvalues = self.spectrum.eigenvalues

    def apply_A(self, v: np.ndarray) -> np.ndarray:
        return v * self.eigenvalues

    def propagate(self, v: np.ndarray, dt: float) -> np.ndarray:
        return np.exp(-self.nu * dt * self.eigenvalues) * v

    def field(self, v: np.ndarray) -> SpectralField:
        return self.spectrum.from_coordinates(v)

    def coordinates(self, field: SpectralField) -> np.ndarray:
        return self.spectrum.to_coordinates(field)

    def bilinear(self, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        if v.ndim == 2:
            return np.stack([self.bilinear(a, b) for a, b in zip(v, w)])
        return self.coordinates(bilinear_B(self.field(v), self.field(w)))

    @property
    def dissipation_rate(self) -> float:
        return self.nu * self.spectrum.lambda_1

    @property
    def lambda_1(self) -> float:
        return self.spectrum.lambda_1

    @property
    def quadratic_bound(self) -> float:
        raise NotImplementedError("the Navier-Stokes bilinear term is unbounded on H")

    def absorbing_bounds(self):
        G = self.grashof
        return 2.0 * self.nu ** 2 * G ** 2, 2.0 * self.nu ** 2 * self.lambda_1 * G ** 2

    def random_state(self, rng: np.random.Generator, norm: float, slope: float = 1.5) -> np.ndarray:
        v = self.spectrum.random_coordinates(rng, slope)
        return norm * v / np.linalg.norm(v)
