"""Repeated games with a churning population of adaptive learners."""

from .errors import ArgumentError, BoundFailure, CapacityError, ConfigError

__version__ = "0.1.0"

__all__ = ["ArgumentError", "BoundFailure", "CapacityError", "ConfigError", "__version__"]
