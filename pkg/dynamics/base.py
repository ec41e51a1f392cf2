import logging
import math
from typing import Optional, Tuple

import numpy as np

from core.errors import NumericInputError, ShapeError, StepRejectedError


class DissipativeSystem:
    """
    du/dt = -nu A u - B(u, u) + f on a real coordinate space R^d.

    Coordinates are orthonormal, so the Euclidean inner product is the H inner
    product. Subclasses provide the dissipative part, the bilinear term and the
    forcing; stepping, the perturbation step and the energy bookkeeping are shared.
    """

    name = "system"
    stochastic = False

    def __init__(self, dim: int, nu: float, forcing: np.ndarray):
        self.dim = int(dim)
        self.nu = float(nu)
        self.forcing = np.asarray(forcing, dtype=float)
        self.logger = logging.getLogger(self.name)

    # --- contract ---

    def apply_A(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Systems must implement apply_A")

    def bilinear(self, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Systems must implement bilinear")

    def propagate(self, v: np.ndarray, dt: float) -> np.ndarray:
        """exp(-nu A dt) applied to v (rows of a 2-D array are independent states)."""
        raise NotImplementedError("Systems must implement propagate")

    @property
    def dissipation_rate(self) -> float:
        """c_A with <nu A v, v> >= c_A |v|^2."""
        raise NotImplementedError

    @property
    def lambda_1(self) -> float:
        raise NotImplementedError

    @property
    def quadratic_bound(self) -> float:
        """c_B with |B(v, w)| <= c_B |v| |w| (finite-dimensional systems only)."""
        raise NotImplementedError

    # --- derived quantities ---

    def check_state(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dim:
            raise ShapeError(f"{self.name} expects states of dimension {self.dim}", expected=(self.dim,), actual=u.shape)
        if not np.all(np.isfinite(u)):
            raise NumericInputError(f"non-finite state passed to {self.name}")
        return u

    def nonlinear(self, u: np.ndarray, t: float = 0.0) -> np.ndarray:
        """Explicit part of the right-hand side: -B(u, u) + f."""
        return -self.bilinear(u, u) + self.forcing

    def rhs(self, t: float, u: np.ndarray) -> np.ndarray:
        u = self.check_state(u)
        return -self.nu * self.apply_A(u) + self.nonlinear(u, t)

    def norm_H(self, u: np.ndarray) -> float:
        return float(np.linalg.norm(u))

    def norm_V_sq(self, u: np.ndarray) -> float:
        return float(np.dot(u, self.apply_A(u)))

    def norm_V(self, u: np.ndarray) -> float:
        return math.sqrt(max(self.norm_V_sq(u), 0.0))

    def norm_Au(self, u: np.ndarray) -> float:
        return float(np.linalg.norm(self.apply_A(u)))

    @property
    def forcing_norm(self) -> float:
        return float(np.linalg.norm(self.forcing))

    @property
    def grashof(self) -> float:
        return self.forcing_norm / (self.nu ** 2 * self.lambda_1)

    def absorbing_bounds(self) -> Tuple[float, float]:
        """Squared H and V radii of the absorbing ball: 2|f|^2/c_A^2 and lambda_1 times that."""
        h_sq = 2.0 * (self.forcing_norm / self.dissipation_rate) ** 2
        return h_sq, self.lambda_1 * h_sq

    @property
    def absorbing_radius(self) -> float:
        return math.sqrt(self.absorbing_bounds()[0])

    def energy_envelope(self, initial_energy: float, t: np.ndarray) -> np.ndarray:
        """e^{-ct} |u0|^2 + |f|^2/c^2 (1 - e^{-ct}) with c = nu lambda_1 (c_A for finite systems)."""
        c = self.dissipation_rate
        decay = np.exp(-c * np.asarray(t, dtype=float))
        return decay * initial_energy + (self.forcing_norm / c) ** 2 * (1.0 - decay)

    def time_integral_bound(self, T: float, initial_energy: Optional[float] = None) -> float:
        """
        Upper bound on int_t^{t+T} |u|_V^2 given |u(t)|^2 (the absorbing radius when omitted):
        nu int |u|_V^2 <= |u(t)|^2 + T |f|^2 / c. Inside the Navier-Stokes ball this is
        (2 + T nu lambda_1) nu G^2.
        """
        energy = self.absorbing_bounds()[0] if initial_energy is None else initial_energy
        return (energy + T * self.forcing_norm ** 2 / self.dissipation_rate) / self.nu

    # --- time stepping ---

    def step(self, u: np.ndarray, dt: float, t: float = 0.0) -> np.ndarray:
        """Integrating factor for nu A, Heun for the explicit part."""
        k1 = self.nonlinear(u, t)
        predictor = self.propagate(u + dt * k1, dt)
        k2 = self.nonlinear(predictor, t + dt)
        return self.propagate(u + 0.5 * dt * k1, dt) + 0.5 * dt * k2

    def step_perturbation(self, u: np.ndarray, e: np.ndarray, dt: float) -> np.ndarray:
        """step(u + e) - step(u), evaluated from the bilinear expansion of the stages."""
        d1 = -(self.bilinear(u, e) + self.bilinear(e, u) + self.bilinear(e, e))
        k1 = self.nonlinear(u)
        base = self.propagate(u + dt * k1, dt)
        delta = self.propagate(e + dt * d1, dt)
        d2 = -(self.bilinear(base, delta) + self.bilinear(delta, base) + self.bilinear(delta, delta))
        return self.propagate(e + 0.5 * dt * d1, dt) + 0.5 * dt * d2

    def diffusion(self, u: np.ndarray, dW: np.ndarray) -> np.ndarray:
        """Stochastic forcing sigma(u) dW of the truth; zero for deterministic systems."""
        return np.zeros_like(u)

    def guarded_step(self, u: np.ndarray, dt: float, step: int = 0, dW: Optional[np.ndarray] = None) -> np.ndarray:
        new = self.step(u, dt)
        if dW is not None:
            new = new + self.diffusion(u, dW)
        limit = 2.0 * max(self.norm_H(u), self.absorbing_radius)
        energy = float(np.dot(new, new)) if np.all(np.isfinite(new)) else math.inf
        if not math.isfinite(energy) or math.sqrt(energy) > limit and limit > 0:
            raise StepRejectedError(
                f"{self.name}: energy blow-up at step {step} (|u|^2={energy:.3e}); reduce dt",
                step=step,
                energy=energy,
            )
        return new

    def random_state(self, rng: np.random.Generator, norm: float) -> np.ndarray:
        v = rng.standard_normal(self.dim)
        return norm * v / np.linalg.norm(v)
