"""Exception hierarchy.

Two branches matter to callers: :class:`ValidationError` for inputs that
violate a precondition and :class:`NumericalError` for solver failures on
otherwise valid input. The CLI maps them to exit codes 2 and 3.
"""


class HbarSimError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(HbarSimError, ValueError):
    """A physical or configuration parameter violates an invariant."""


class NumericalError(HbarSimError, ArithmeticError):
    """A numerical procedure could not produce a result."""


class NegativeTime(ValidationError):
    pass


class NonPositiveHorizon(ValidationError):
    pass


class NonPositiveLength(ValidationError):
    pass


class StepBelowCorrelationTime(ValidationError):
    """Grid step finer than the correlation time of the noise."""


class MissingCorrelationTime(ValidationError):
    """Operation needs ``delta_t`` and ``sigma``, not just ``tau``."""


class InvalidMeasurementError(ValidationError):
    pass


class DegenerateNoise(ValidationError):
    """Zero noise strength where an interior extremum is required."""


class BracketFailure(NumericalError):
    pass


class UnattainablePrecision(NumericalError):
    """Measurement error too coarse to exclude any noise strength."""
