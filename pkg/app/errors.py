from typing import Optional


class ThermometryError(Exception):
    """Base class for every error raised by the simulator and estimators"""


class DomainError(ThermometryError, ValueError):
    """A physical precondition does not hold (temperature, population, rates)"""


class NoiseDominatedError(DomainError):
    """The measured correlator is negative where a square root is required"""


class UsageError(ThermometryError, ValueError):
    """Inputs have the wrong shape for the requested operation"""


class DegenerateCalibrationError(UsageError):
    """Ground and excited responses cannot be told apart"""


class RecordFormatError(UsageError):
    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EstimationError(ThermometryError):
    """An estimator could not produce a value from the records"""


class FitError(EstimationError):
    def __init__(self, message: str, residual_norm: Optional[float] = None):
        self.residual_norm = residual_norm
        if residual_norm is not None:
            message = f"{message} (residual norm {residual_norm:.6g})"
        super().__init__(message)
