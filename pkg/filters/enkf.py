from typing import Optional

import numpy as np

from core.errors import ObservationError
from core.schemas import InflationSpec
from covariance.operators import CovarianceOperator, ensemble_cov, inflate
from dynamics.base import DissipativeSystem
from filters.base_filter import BaseFilter
from observations.noise import ObservationIncrement
from observations.operators import ObservationOperator


class EnsembleFilter(BaseFilter):
    """Shared machinery of the ensemble filters: C(m) recomputed from the members every step."""

    ensemble = True
    damping_factor = 1.5

    def __init__(self, name: str, system: DissipativeSystem, op: ObservationOperator, sigma: float,
                 inflation: Optional[InflationSpec] = None, divergence_factor: float = 1e3):
        if sigma <= 0:
            raise ValueError(f"{name} requires sigma > 0")
        super().__init__(name, system, op, sigma, divergence_factor)
        self.inflation = inflation or InflationSpec()
        if self.inflation.localize:
            self.op.projection.validate()
        self._damping = 0.0

    def effective_covariance(self, state: np.ndarray) -> CovarianceOperator:
        return inflate(ensemble_cov(state), self.inflation, self.op.projection, validate=False)

    def damping_term(self, errors: np.ndarray) -> float:
        """-(factor) (mu / sigma^2) (1/K) sum_k |P e_k|^2; non-positive for mu >= 0."""
        mu = self.inflation.additive
        if not mu:
            return 0.0
        Pe = self.op.projection.apply(errors)
        return -self.damping_factor * mu / self.sigma ** 2 * float(np.mean(np.sum(Pe ** 2, axis=1)))

    def step(self, state: np.ndarray, inc: ObservationIncrement) -> np.ndarray:
        self._damping = self.damping_term(state - inc.truth)
        self.logger.debug(f"step {inc.step}: damping term {self._damping:.6e}")
        return super().step(state, inc)

    def error_step(self, errors: np.ndarray, inc: ObservationIncrement) -> np.ndarray:
        self._damping = self.damping_term(errors)
        return super().error_step(errors, inc)

    @property
    def last_damping(self) -> float:
        return self._damping

    def spread(self, state: np.ndarray) -> float:
        return ensemble_cov(state).trace()


class EnKFFilter(EnsembleFilter):
    """
    dm_k = {F(m_k) - sigma^-2 C O*O (m_k - u)} dt + sigma^-1 C O* (dW + dB_k).

    dW is the observation noise shared by every member, dB_k the member's own
    perturbation stream.
    """

    def __init__(self, system: DissipativeSystem, op: ObservationOperator, sigma: float,
                 inflation: Optional[InflationSpec] = None, divergence_factor: float = 1e3):
        super().__init__("enkf", system, op, sigma, inflation, divergence_factor)

    def correction(self, state: np.ndarray, innovation: np.ndarray, inc: ObservationIncrement) -> np.ndarray:
        if inc.dB is None or inc.dB.shape != innovation.shape:
            raise ObservationError("EnKF needs one perturbation increment per member")
        C = self.effective_covariance(state)
        forcing = -(inc.dt / self.sigma ** 2) * innovation + (inc.dW + inc.dB) / self.sigma
        return C.apply(self.op.adjoint(forcing))
