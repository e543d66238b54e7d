"""Exception hierarchy.

Two families matter to callers: :class:`DataError` (bad inputs, bad shapes,
invalid configuration) and :class:`NumericalError` (a system that cannot be
solved at working precision). The command line maps them to distinct exit
codes.
"""

from __future__ import annotations


__all__ = [
    "RestselError",
    "DataError",
    "DimensionError",
    "RestrictionRankError",
    "ParseError",
    "ConfigError",
    "DomainError",
    "UndefinedVarianceError",
    "AssumptionViolationError",
    "DegenerateSignalError",
    "NoFeasibleModelError",
    "NumericalError",
    "SingularDesignError",
    "SingularSystemError",
    "LeverageSingularityError",
    "FoldDegeneracyError",
    "CovarianceSingularityError",
    "FactorizationError",
    "ReplicationError",
]


class RestselError(Exception):
    """Base class for every error raised by this package."""


class DataError(RestselError, ValueError):
    """Input data or arguments are malformed."""


class DimensionError(DataError):
    """Array shapes or index ranges are inconsistent."""


class RestrictionRankError(DataError):
    """A restriction matrix does not have full row rank."""


class ParseError(DataError):
    """A data file could not be parsed; carries the offending location."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ConfigError(DataError):
    """A simulation or suite configuration field is invalid."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"invalid config field '{field}': {message}")


class DomainError(DataError):
    """A closed-form quantity is undefined for the requested dimensions."""


class UndefinedVarianceError(DomainError):
    """The full-model variance estimate RSS(p)/(n-p) needs n > p."""


class AssumptionViolationError(DataError):
    """The true coefficients do not satisfy the candidate restrictions."""


class DegenerateSignalError(DataError):
    """The true regression function has zero variance."""


class NoFeasibleModelError(RestselError):
    """Every candidate scored the +inf sentinel under some criterion."""

    def __init__(self, criterion: str):
        self.criterion = criterion
        super().__init__(f"no feasible candidate under criterion {criterion}")


class NumericalError(RestselError, ArithmeticError):
    """A linear system is singular at working precision."""


class SingularDesignError(NumericalError):
    """The design matrix is rank deficient."""


class SingularSystemError(NumericalError):
    """R (X'X)^-1 R' is singular."""


class LeverageSingularityError(NumericalError):
    """A leave-one-out denominator 1 - H_ii + HQ_ii vanished."""


class FoldDegeneracyError(NumericalError):
    """A cross-validation training split cannot be fitted."""

    def __init__(self, fold: int, reason: str = ""):
        self.fold = fold
        msg = f"training split for fold {fold} is not solvable"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class CovarianceSingularityError(NumericalError):
    """The sample covariance X'X/n is singular."""


class FactorizationError(NumericalError):
    """A covariance matrix is not positive definite."""


class ReplicationError(RestselError):
    """Wraps a failure inside one Monte Carlo replication."""

    def __init__(self, rep: int, cause: Exception):
        self.rep = rep
        self.cause = cause
        super().__init__(f"replication {rep}: {type(cause).__name__}: {cause}")
