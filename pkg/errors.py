"""
This module defines the exceptions raised across the optex packages.

Every error derives from OptexError so the command-line entry point can catch
them in one place. Errors that describe invalid input also derive from
ValueError, which lets pydantic validators raise them directly.
"""


class OptexError(Exception):
    """
    Base class of all optex errors.
    """


class DimensionMismatch(OptexError, ValueError):
    """
    Raised when arrays or designs do not have the expected shape.
    """


class RankDeficient(OptexError, ValueError):
    """
    Raised when regressors (or criterion blocks) do not span R^m.
    """


class SingularMatrix(OptexError, ArithmeticError):
    """
    Raised when a matrix fails the positive definiteness test.
    """


class SingularInformation(SingularMatrix):
    """
    Raised when an information matrix is singular.
    """


class ColumnSpaceViolation(OptexError, ValueError):
    """
    Raised when C(X) is not contained in C(N(w)) for a bound computation.
    """


class NoFeasibleStart(OptexError):
    """
    Raised when the exchange heuristic cannot find a feasible starting design.
    """


class InfiniteBound(OptexError, ValueError):
    """
    Raised when a covariance bound is not finite.
    """


class InfeasibleCaps(OptexError, ValueError):
    """
    Raised when replication caps cannot accommodate the run budget.
    """


class IterationLimit(OptexError):
    """
    Raised when the simplex method exceeds its pivot budget.
    """


class AllIntegral(OptexError):
    """
    Raised by the branching rule when no design variable is fractional.
    """


class McCormickMismatch(OptexError):
    """
    Raised when a solver objective disagrees with the direct criterion value.
    """


class TooLarge(OptexError):
    """
    Raised when complete enumeration exceeds its configured cap.
    """


class NoFeasibleDesign(OptexError):
    """
    Raised when every enumerated design is rejected.
    """


class NameCollision(OptexError, ValueError):
    """
    Raised when exported variable or row names are not unique.
    """


class MissingObjective(OptexError, ValueError):
    """
    Raised when a model without objective coefficients is exported.
    """


class ModelSyntaxError(OptexError, ValueError):
    """
    Raised when an LP or MPS file cannot be parsed.

    Attributes:
        lineno (int | None): 1-based line number of the offending line.
    """

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f'line {lineno}: {message}'
        super().__init__(message)


class InvalidDesign(OptexError):
    """
    Raised when a reported design fails its final re-validation.
    """
