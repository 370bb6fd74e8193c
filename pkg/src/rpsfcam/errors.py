"""Exception hierarchy shared by all pipeline stages."""


class RpsfError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(RpsfError):
    """Invalid parameter combination (grid too small, bad bounds, ...)."""


class DomainError(RpsfError):
    """Input outside the mathematical domain of an operation."""


class SamplingError(RpsfError):
    """A discretization validity condition is violated."""


class DegenerateInputError(RpsfError):
    """Input carries no usable signal (all-zero pupil, featureless kernel)."""


class InsufficientDataError(RpsfError):
    """Not enough samples to perform the requested fit or estimate."""
