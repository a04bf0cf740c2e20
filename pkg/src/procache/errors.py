"""Exception types shared across the package."""


class ProcacheError(Exception):
    """Base class for package errors."""


class ConfigError(ProcacheError):
    """Invalid or unknown configuration input (CLI exit code 2)."""


class CapacityError(ProcacheError):
    """An action would leave the cache above its capacity."""


class ImpossibleStateError(ProcacheError):
    """A state that the configured stochastic model cannot reach."""


class NumericalError(ProcacheError):
    """Divergence or non-convergence of an iterative method (CLI exit code 3)."""
