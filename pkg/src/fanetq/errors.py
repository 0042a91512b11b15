"""Shared exception types."""


class ConfigError(ValueError):
    """A scenario or trainer configuration violates its constraints."""


class ContractViolation(ValueError):
    """A caller broke an operation precondition (wrong shape, bad index, ...)."""


class TrainingError(RuntimeError):
    """Non-finite losses or gradients surfaced during optimization."""


class CalibrationError(RuntimeError):
    """No candidate configuration reached the calibration target."""

    def __init__(self, message: str, sweep: list | None = None):
        super().__init__(message)
        self.sweep = sweep or []
