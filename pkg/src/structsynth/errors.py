"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented contract."""


class SolverError(RuntimeError):
    """Raised when an iterative routine cannot produce a usable result."""
