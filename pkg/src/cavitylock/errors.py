"""Exception types shared across the package."""


class CavityLockError(Exception):
    """Base class for all package-specific errors."""


class DomainError(CavityLockError):
    """Inputs outside the mathematical domain of an operation (non-finite
    values, empty frequency bands, records shorter than a required window)."""


class ConfigurationError(CavityLockError):
    """Structurally valid call with physically or numerically inadmissible
    configuration (bad rates, unlockable bias point, unknown config keys)."""


class CalibrationError(CavityLockError):
    """A calibration procedure could not be completed (degenerate phase
    sweep, infeasible tunability targets)."""


class NumericalAccuracyError(CavityLockError):
    """A numerical procedure failed its own accuracy contract.  Carries the
    competing estimates so the caller can judge."""

    def __init__(self, message, estimates=None):
        super().__init__(message)
        self.estimates = estimates
