"""Exception hierarchy; the CLI maps each family to an exit code."""


class MinprofError(Exception):
    """Base class for all package errors."""


class ConfigError(MinprofError, ValueError):
    """Invalid or incomplete pipeline configuration."""


class DataError(MinprofError, ValueError):
    """Input data violates a schema or a precondition."""


class SchemaError(DataError):
    pass


class DuplicateRowError(DataError):
    pass


class NumericalError(MinprofError, ArithmeticError):
    """A numerical routine could not produce a valid result."""
