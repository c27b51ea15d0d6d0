"""Exception types shared across the package."""


class MfgStopError(Exception):
    """Base class for all package errors."""


class ConfigError(MfgStopError, ValueError):
    """Invalid model, game or experiment configuration."""


class ScanTooCoarse(MfgStopError):
    """A scan cell hides more than one sign change of the residual."""


class NotARoot(MfgStopError, ValueError):
    """The point handed to the classifier does not solve the master equation."""


class NotFound(MfgStopError, LookupError):
    """A monotone window map has no admissible double fixed point."""


class OrderViolation(MfgStopError, ValueError):
    """Two equilibrium paths cannot be spliced because counts would decrease."""


class DomainError(MfgStopError, ValueError):
    """An asymptotic formula was evaluated outside its domain."""
