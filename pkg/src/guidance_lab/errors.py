"""Exception hierarchy shared across the package."""


class GuidanceLabError(Exception):
    pass


class DomainError(GuidanceLabError, ValueError):
    """An argument lies outside the region where an operation is defined."""


class ConfigError(GuidanceLabError, ValueError):
    """A configuration field violates its invariant."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class OrderingError(GuidanceLabError, ValueError):
    """Two log-SNR values were passed in the wrong order."""


class ShapeError(GuidanceLabError, ValueError):
    pass


class NumericError(GuidanceLabError, ArithmeticError):
    """A computation produced NaN/Inf or left its representable range."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class QuadratureError(NumericError):
    pass


class TrainingError(NumericError):
    pass


class CheckpointError(GuidanceLabError, ValueError):
    pass
