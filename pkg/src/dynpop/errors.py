"""Exception types shared across the package.

The CLI maps these onto exit codes, so every module raises one of them
instead of a bare ValueError where the distinction matters.
"""


class DynPopError(Exception):
    """Base class for package errors."""


class ArgumentError(DynPopError, ValueError):
    """Bad input to an operation: wrong shape, out-of-range value, bad interval."""


class ConfigError(DynPopError, ValueError):
    """An experiment config or instance file failed validation."""


class CapacityError(DynPopError, RuntimeError):
    """An enumeration would exceed the profile guard."""


class BoundFailure(DynPopError, AssertionError):
    """A theorem bound check failed in strict mode."""
