"""Exception hierarchy shared across the package."""


class MSDAError(Exception):
    """Base class for every error raised by msda_few."""


class DimensionError(MSDAError, ValueError):
    """Array shapes do not fit the operation."""


class ParameterError(MSDAError, ValueError):
    """A hyperparameter is outside its admissible range."""


class ContractError(MSDAError, RuntimeError):
    """A caller broke a precondition (empty batch, non-scalar root, ...)."""


class NumericError(MSDAError, ArithmeticError):
    """A NaN or infinity appeared where finite numbers are required."""


class DataError(MSDAError, ValueError):
    """Malformed input data; the message names the offending row."""


class ConfigError(MSDAError, ValueError):
    """Invalid run configuration; the message names the key path."""
