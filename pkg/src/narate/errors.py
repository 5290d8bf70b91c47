"""Exception hierarchy shared by every solver in the package."""


class NarateError(Exception):
    """Base class for all errors raised by narate."""


class DimensionError(NarateError, ValueError):
    """Matrix or sequence shapes are inconsistent."""


class InvalidDistributionError(NarateError, ValueError):
    """A probability table is negative or fails to normalize."""


class CapacityError(NarateError):
    """The requested instance exceeds the enumeration caps."""


class InfeasibleDistortionError(NarateError, ValueError):
    """The distortion level lies outside the feasible range."""

    def __init__(self, message, feasible_range=None):
        super().__init__(message)
        self.feasible_range = feasible_range


class DegenerateSupportError(NarateError):
    """A tilted kernel has an empty support (zero normalizer)."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class ConvergenceError(NarateError):
    """An iteration failed to reach its tolerance."""


class NumericalError(NarateError):
    """A matrix required for an update is (numerically) singular."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class ConfigError(NarateError, ValueError):
    """An experiment configuration is malformed or invalid."""
