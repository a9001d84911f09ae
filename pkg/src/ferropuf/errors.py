"""Exception types shared across the package."""


class FerroPufError(Exception):
    """Base class for all package errors."""


class ConfigError(FerroPufError, ValueError):
    """Invalid parameters or experiment configuration."""


class DomainError(FerroPufError, ValueError):
    """An operation was requested outside its valid operating regime."""


class DimensionError(FerroPufError, ValueError):
    """Mismatched or empty array shapes."""


class InsufficientDataError(FerroPufError, ValueError):
    """Too few samples for the requested statistic."""


class StateError(FerroPufError, RuntimeError):
    """Operation on an object in the wrong lifecycle state (e.g. unregistered cell)."""
