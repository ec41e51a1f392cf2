import numpy as np

from covariance.operators import CovarianceOperator
from dynamics.base import DissipativeSystem
from filters.base_filter import BaseFilter
from observations.noise import ObservationIncrement
from observations.operators import ObservationOperator


class ThreeDVarFilter(BaseFilter):
    """dm = {F(m) - sigma^-2 C O*O (m - u)} dt + sigma^-1 C O* dW with a fixed background C."""

    def __init__(self, system: DissipativeSystem, op: ObservationOperator, sigma: float,
                 covariance: CovarianceOperator, divergence_factor: float = 1e3):
        if sigma <= 0:
            raise ValueError("3DVar requires sigma > 0")
        super().__init__("3dvar", system, op, sigma, divergence_factor)
        self.covariance = covariance

    def correction(self, state: np.ndarray, innovation: np.ndarray, inc: ObservationIncrement) -> np.ndarray:
        s2 = self.sigma ** 2
        forcing = -(inc.dt / s2) * innovation + inc.dW / self.sigma
        return self.covariance.apply(self.op.adjoint(forcing))
