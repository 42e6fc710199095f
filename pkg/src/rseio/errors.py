"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class RseioError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(RseioError, ValueError):
    """Invalid or inconsistent configuration (dimensions, schema, ranges)."""


class UnsupportedConfigError(ConfigError):
    """Configuration is valid but outside what an operation supports."""


class DomainError(RseioError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class UsageError(RseioError, ValueError):
    """Call contract violated by the caller (e.g. missing measurement)."""


class NumericError(RseioError, ArithmeticError):
    """Numerical failure, optionally tagged with the time index."""

    def __init__(self, message: str, t: int | None = None):
        self.t = t
        if t is not None:
            message = f"{message} (t={t})"
        super().__init__(message)


class SingularMatrixError(NumericError):
    """A matrix that must be inverted is singular or too ill-conditioned."""

    def __init__(self, name: str, cond: float, t: int | None = None):
        self.name = name
        self.cond = cond
        super().__init__(f"matrix {name} is singular to working precision (cond={cond:.3e})", t)


class TransformUndefinedError(NumericError):
    """The homographic transform's denominator is singular."""
