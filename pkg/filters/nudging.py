import numpy as np

from dynamics.base import DissipativeSystem
from filters.base_filter import BaseFilter
from observations.noise import ObservationIncrement
from observations.operators import ObservationOperator


class NudgingFilter(BaseFilter):
    """
    dm = {F(m) - mu I_h (m - u)} dt + mu sigma O* dW.

    sigma = 0 is deterministic nudging; mu = 0 leaves a pure forecast.
    """

    def __init__(self, system: DissipativeSystem, op: ObservationOperator, sigma: float, mu: float,
                 divergence_factor: float = 1e3):
        if mu < 0:
            raise ValueError(f"nudging strength must be non-negative (got {mu})")
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        super().__init__("nudging", system, op, sigma, divergence_factor)
        self.mu = float(mu)

    def correction(self, state: np.ndarray, innovation: np.ndarray, inc: ObservationIncrement) -> np.ndarray:
        forcing = -inc.dt * innovation
        if self.sigma:
            forcing = forcing + self.sigma * inc.dW
        return self.mu * self.op.adjoint(forcing)

    @property
    def equivalent_background(self) -> float:
        """The constant c of the 3DVar background C = c I that reproduces this filter."""
        return self.mu * self.sigma ** 2
