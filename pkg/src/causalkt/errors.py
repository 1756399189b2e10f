"""Exception hierarchy shared across the package."""


class CausalKTError(Exception):
    """Base class for all package errors."""


class DimensionError(CausalKTError, ValueError):
    """Operand shapes do not fit together."""


class DomainError(CausalKTError, ValueError):
    """An input lies outside an operation's domain (empty array, log of zero...)."""


class ContractError(CausalKTError, RuntimeError):
    """An API precondition was violated, e.g. backward on a non-scalar."""


class NumericalError(CausalKTError, FloatingPointError):
    """A non-finite or degenerate value appeared during computation."""


class ConfigError(CausalKTError, ValueError):
    """A configuration value is out of range."""


class DataError(CausalKTError, ValueError):
    """Malformed input data."""
