"""Exception types shared across the package."""

from __future__ import annotations


class FdhomError(Exception):
    """Base class for package errors."""


class IntegrandEvaluationError(FdhomError, ValueError):
    """An integrand returned a non-finite or negative value."""

    def __init__(self, message: str, sample: dict | None = None):
        super().__init__(message)
        self.sample = sample or {}


class NonConvergenceError(FdhomError, RuntimeError):
    """A limit along a t-schedule did not settle within tolerance."""

    def __init__(self, message: str, spread: float):
        super().__init__(message)
        self.spread = spread


class InvalidDirectionError(FdhomError, ValueError):
    """A direction vector is zero, not unit, or not rational where required."""


class DiscretizationError(FdhomError, ValueError):
    """Grid spacing is incompatible with the requested domain."""


class InfeasibleQuantizationError(FdhomError, ValueError):
    """The quantized value grid cannot represent the boundary datum."""


class OracleLimitError(FdhomError, ValueError):
    """The brute-force enumeration would exceed its size limits."""

    def __init__(self, message: str, required: int):
        super().__init__(message)
        self.required = required


class PreconditionError(FdhomError, ValueError):
    """An operation was called outside its documented preconditions."""


class ConfigError(FdhomError, ValueError):
    """Invalid experiment configuration."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.message = message
        self.path = path
