"""Semantic exception hierarchy shared by all covaropt modules."""


class CovaroptError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(CovaroptError, ValueError):
    """An input violates a documented precondition (range, shape, sign)."""


class SingularSubmatrixError(CovaroptError):
    """A covariance submatrix is numerically singular; the model is degenerate."""


class InfeasibleSystemError(CovaroptError):
    """A linear replication system has no solution (rank(A) < rank(A|a))."""


class FactorizationError(CovaroptError):
    """A matrix that must be PSD-factorizable is not, beyond round-off."""


class SolverError(CovaroptError):
    """The cone-program solver failed on input that should be solvable."""


class EstimationError(CovaroptError):
    """A maximum-likelihood fit did not converge; diagnostics attached."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
