"""Exception hierarchy shared by all modules.

Every error carries its class name as the short identifier the CLI reports,
so callers can match on type or on ``err.name``.
"""

from __future__ import annotations


class FracContError(Exception):
    """Base class for all library errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


class ValidationError(FracContError, ValueError):
    """Bad input parameters. ``key`` names the offending argument."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class SolverError(FracContError, RuntimeError):
    """A numerical procedure failed to deliver its contract."""


# validation errors

class NonPositiveAlpha(ValidationError):
    pass


class AlphaOutOfRange(ValidationError):
    pass


class BetaOutOfRange(ValidationError):
    pass


class NonPositiveZ(ValidationError):
    pass


class ContourConstraintViolated(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class MissingInitialValue(ValidationError):
    pass


class NegativeLambda(ValidationError):
    pass


class DiagonalNotNormalized(ValidationError):
    pass


class GammaOutOfRange(ValidationError):
    pass


class CoefficientUnbounded(ValidationError):
    pass


class NonPositiveLength(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class NegativeS(ValidationError):
    pass


class BadOrdering(ValidationError):
    pass


class IndexTooSmall(ValidationError):
    pass


class KernelProbeFailed(ValidationError):
    pass


# solver errors

class ToleranceNotReached(SolverError):
    pass


class QuadratureDiverged(SolverError):
    pass


class CompositionBlowup(SolverError):
    pass


class MaxIterExceeded(SolverError):
    pass


class NotConverged(SolverError):
    pass


class DegenerateFit(SolverError):
    pass


class SolverFailure(SolverError):
    """Wraps an error raised while solving one perturbed instance."""

    def __init__(self, message: str, h: float | None = None, cause: Exception | None = None):
        super().__init__(message)
        self.h = h
        self.cause = cause
