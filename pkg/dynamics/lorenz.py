"""Lorenz 63 and Lorenz 96 written as dissipative systems with energy-neutral quadratic terms."""
import math
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.linalg import expm

from dynamics.base import DissipativeSystem


class _FiniteDimensional(DissipativeSystem):
    stochastic = False

    def __init__(self, dim: int, matrix: np.ndarray, forcing: np.ndarray,
                 noise_additive: float = 0.0, noise_multiplicative: float = 0.0):
        super().__init__(dim, 1.0, forcing)
        self.matrix = np.asarray(matrix, dtype=float)
        self.noise_additive = float(noise_additive)
        self.noise_multiplicative = float(noise_multiplicative)
        self.stochastic = bool(noise_additive or noise_multiplicative)
        sym = 0.5 * (self.matrix + self.matrix.T)
        eigs = np.linalg.eigvalsh(sym)
        self._c_A = float(eigs[0])
        self._a_max = float(eigs[-1])
        self._propagator = lru_cache(maxsize=8)(self._make_propagator)

    def _make_propagator(self, dt: float) -> np.ndarray:
        return expm(-self.nu * dt * self.matrix)

    def apply_A(self, v: np.ndarray) -> np.ndarray:
        return v @ self.matrix.T

    def propagate(self, v: np.ndarray, dt: float) -> np.ndarray:
        return v @ self._propagator(float(dt)).T

    @property
    def dissipation_rate(self) -> float:
        return self.nu * self._c_A

    @property
    def lambda_1(self) -> float:
        return self._c_A

    def absorbing_bounds(self) -> Tuple[float, float]:
        """
        Expectation-level ball: limsup E|u|^2 <= 2 (|f|^2/c + 2 d s1^2) / (c - 2 s2^2),
        which is 2|f|^2/c^2 without noise. No ball exists once 2 s2^2 >= c.
        """
        c = self.dissipation_rate
        margin = c - 2.0 * self.noise_multiplicative ** 2
        if margin <= 0:
            return math.inf, math.inf
        h_sq = 2.0 * (self.forcing_norm ** 2 / c + 2.0 * self.dim * self.noise_additive ** 2) / margin
        return h_sq, self._a_max * h_sq

    def diffusion(self, u: np.ndarray, dW: np.ndarray) -> np.ndarray:
        return self.noise_additive * dW + self.noise_multiplicative * u * dW


class Lorenz63(_FiniteDimensional):
    """
    Shifted Lorenz 63: A = [[a, -a, 0], [a, b, 0], [0, 0, g]], B(v, w) = (0, v1 w3, -v1 w2),
    f = (0, 0, -g (r + a) / b^2). The defaults give the classical (10, 28, 8/3) attractor.
    """

    name = "lorenz63"

    def __init__(self, alpha: float = 10.0, beta: float = 1.0, gamma: float = 8.0 / 3.0, rho: float = 28.0,
                 noise_additive: float = 0.0, noise_multiplicative: float = 0.0):
        self.alpha, self.beta, self.gamma, self.rho = alpha, beta, gamma, rho
        matrix = np.array([[alpha, -alpha, 0.0], [alpha, beta, 0.0], [0.0, 0.0, gamma]])
        forcing = np.array([0.0, 0.0, -gamma * (rho + alpha) / beta ** 2])
        super().__init__(3, matrix, forcing, noise_additive, noise_multiplicative)

    def bilinear(self, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        zero = np.zeros_like(v[..., 0])
        return np.stack([zero, v[..., 0] * w[..., 2], -v[..., 0] * w[..., 1]], axis=-1)

    @property
    def quadratic_bound(self) -> float:
        return 1.0


class Lorenz96(_FiniteDimensional):
    """dv_i = ((v_{i+1} - v_{i-2}) v_{i-1} - v_i + F_i) dt on a periodic ring."""

    name = "lorenz96"

    def __init__(self, dimension: int = 40, forcing: float = 8.0,
                 noise_additive: float = 0.0, noise_multiplicative: float = 0.0):
        if dimension < 4:
            raise ValueError("Lorenz 96 needs at least four variables")
        forcing_vec = np.broadcast_to(np.asarray(forcing, dtype=float), (dimension,)).copy()
        super().__init__(dimension, np.eye(dimension), forcing_vec, noise_additive, noise_multiplicative)

    def bilinear(self, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        # B(v, w)_i = -v_{i-1} w_{i+1} + v_{i-2} w_{i-1}
        return -np.roll(v, 1, axis=-1) * np.roll(w, -1, axis=-1) + np.roll(v, 2, axis=-1) * np.roll(w, 1, axis=-1)

    def propagate(self, v: np.ndarray, dt: float) -> np.ndarray:
        return np.exp(-self.nu * dt) * v

    @property
    def quadratic_bound(self) -> float:
        return 2.0
