"""Exception types raised across the package."""


class StreamTtaError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(StreamTtaError, ValueError):
    """Array dimensions do not match what the operation requires."""


class EmptyInputError(StreamTtaError, ValueError):
    """An operation that needs at least one element received none."""


class NumericalError(StreamTtaError, ArithmeticError):
    """Non-finite or otherwise numerically invalid input."""


class ConvergenceError(StreamTtaError, RuntimeError):
    """An iterative solver did not converge within its iteration budget."""


class StateError(StreamTtaError, RuntimeError):
    """Stateful object queried before it holds enough data."""


class LabelError(StreamTtaError, ValueError):
    """Labels missing or inconsistent with the trials they describe."""


class ConfigError(StreamTtaError, ValueError):
    """Invalid or unknown configuration value."""


class MetricError(StreamTtaError, ValueError):
    """A metric is undefined for the given inputs."""
