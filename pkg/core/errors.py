from typing import Optional, Sequence, Tuple


class DAError(Exception):
    """Base class for all errors raised by the assimilation library."""


class NumericInputError(DAError):
    pass


class ShapeError(DAError):
    def __init__(self, message: str, expected: Optional[Tuple] = None, actual: Optional[Tuple] = None):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class StepRejectedError(DAError):
    """Post-step energy guard tripped (usually a CFL violation)."""

    def __init__(self, message: str, step: Optional[int] = None, energy: Optional[float] = None):
        super().__init__(message)
        self.step = step
        self.energy = energy


class SpinUpFailedError(DAError):
    def __init__(self, message: str, horizon: float, ratio: float):
        super().__init__(message)
        self.horizon = horizon
        self.ratio = ratio


class ObservationError(DAError):
    pass


class DegenerateEnsembleError(DAError):
    def __init__(self, message: str, size: int):
        super().__init__(message)
        self.size = size


class InvalidProjectionError(DAError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class UnsupportedOperatorError(DAError):
    def __init__(self, message: str, kind: str):
        super().__init__(message)
        self.kind = kind


class FilterDivergenceError(DAError):
    def __init__(self, message: str, step: int, norm: float, threshold: float):
        super().__init__(message)
        self.step = step
        self.norm = norm
        self.threshold = threshold


class AnalysisError(DAError):
    """Innovation matrix could not be factorised."""

    def __init__(self, message: str, condition_number: float):
        super().__init__(message)
        self.condition_number = condition_number


class SeriesTooShortError(DAError):
    def __init__(self, message: str, length: int):
        super().__init__(message)
        self.length = length


class MissingCalibrationError(DAError):
    def __init__(self, missing: Sequence[str]):
        super().__init__(f"Missing calibrated constants: {', '.join(missing)}")
        self.missing = list(missing)


class InvalidComparisonError(DAError):
    pass


class ConfigurationError(DAError):
    pass
