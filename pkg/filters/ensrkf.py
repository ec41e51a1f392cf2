from typing import Optional

import numpy as np

from core.schemas import InflationSpec
from dynamics.base import DissipativeSystem
from filters.enkf import EnsembleFilter
from observations.noise import ObservationIncrement
from observations.operators import ObservationOperator


class EnSRKFFilter(EnsembleFilter):
    """
    dm_k = {F(m_k) - 1/2 sigma^-2 C O*O (m_k - u) - 1/2 sigma^-2 C O*O (m_bar - u)} dt
           + sigma^-1 C O* dW, with a single shared stream.
    """

    damping_factor = 0.5

    def __init__(self, system: DissipativeSystem, op: ObservationOperator, sigma: float,
                 inflation: Optional[InflationSpec] = None, divergence_factor: float = 1e3):
        super().__init__("ensrkf", system, op, sigma, inflation, divergence_factor)

    def correction(self, state: np.ndarray, innovation: np.ndarray, inc: ObservationIncrement) -> np.ndarray:
        C = self.effective_covariance(state)
        mean_innovation = innovation.mean(axis=0)
        drift = -(0.5 * inc.dt / self.sigma ** 2) * (innovation + mean_innovation)
        return C.apply(self.op.adjoint(drift + inc.dW / self.sigma))
