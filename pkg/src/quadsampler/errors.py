"""Exception types shared across the package."""

from __future__ import annotations


class QuadSamplerError(Exception):
    """Base class for all package errors."""


class SchemaError(QuadSamplerError):
    """A data or spec file does not match its documented schema."""

    def __init__(self, key: str, message: str, line: int | None = None):
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{key}{where}: {message}")


class ValidationError(QuadSamplerError):
    """Parsed values violate a model or spec invariant."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        prefix = ""
        if key is not None:
            prefix = f"{key}" + (f" (line {line})" if line is not None else "") + ": "
        super().__init__(prefix + message)


class DomainError(QuadSamplerError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class UndefinedMetricError(QuadSamplerError, ValueError):
    """A metric was requested over an empty sample."""


class IntegrationDivergedError(QuadSamplerError, RuntimeError):
    """The simulator state became non-finite."""

    def __init__(self, last_valid_time: float):
        self.last_valid_time = last_valid_time
        super().__init__(f"integration diverged after t={last_valid_time:.6f} s")
