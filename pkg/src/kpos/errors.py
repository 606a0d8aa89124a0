"""Domain errors shared across the package."""


class KposError(Exception):
    """Base class for all package errors."""


class NotHermitianPreserving(KposError):
    """Raised when an operation requires a Hermitian Choi matrix."""


class NotCompletelyPositive(KposError):
    """Raised when an unsigned Kraus/Stinespring form is requested for a non-PSD Choi."""


class NotPSD(KposError):
    """Raised when a positive semi-definite input is required."""


class InverseMismatch(KposError):
    """Raised when a supplied (map, inverse) pair does not compose to the identity."""


class SeedRejected(KposError):
    """Raised when a workflow seed fails one of its preconditions."""

    def __init__(self, reason: str):
        super().__init__(f"seed rejected: {reason}")
        self.reason = reason


class SolverFailure(KposError):
    """Raised when the conic backend cannot produce a usable solution."""
