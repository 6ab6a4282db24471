"""Exception taxonomy shared across the package."""


class ForgelensError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ForgelensError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(ForgelensError, ValueError):
    """A configuration value is missing, malformed, or inconsistent."""


class InputError(ForgelensError, ValueError):
    """Runtime input violates an operation's precondition."""


class UsageError(ForgelensError, RuntimeError):
    """An API was called in an unsupported way."""


class NumericError(ForgelensError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class MetricError(ForgelensError, ValueError):
    """A metric cannot be computed on the given inputs."""


class AssemblyError(ForgelensError, ValueError):
    """A prompt assembly component is missing or malformed."""


class CheckpointError(ForgelensError, ValueError):
    """Checkpoint file is corrupt, or its version/contents mismatch the model."""
