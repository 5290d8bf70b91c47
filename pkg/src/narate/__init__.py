"""Nonanticipative rate distortion: finite Markov sources and Gauss-Markov realizations."""

from .errors import (
    CapacityError,
    ConfigError,
    ConvergenceError,
    DegenerateSupportError,
    DimensionError,
    InfeasibleDistortionError,
    InvalidDistributionError,
    NarateError,
    NumericalError,
)
from .model import (
    DistortionSpec,
    FiniteMarkovSource,
    RateDistortionPoint,
    ReproductionPolicy,
    StateSpaceModel,
    check_capacity,
    evaluate_distortion,
    validate_model,
)
from .waterfill import WaterfillAllocation, allocate, nats_to_bits, rate_curve, rate_of

__version__ = "0.1.0"
