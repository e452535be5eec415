"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError (and subclasses) -> 3, NumericalError -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration: unknown keys, bad values, missing files."""


class DataError(ValueError):
    """Input data violates a contract (unknown class, missing embedding, ...)."""


class FormatError(DataError):
    """A file does not conform to the interchange format."""


class DimensionError(ValueError):
    """Operands or vectors with incompatible shapes."""


class NumericalError(RuntimeError):
    """Non-finite values or a failed numeric self-check."""
