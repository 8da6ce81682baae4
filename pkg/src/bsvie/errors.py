"""Exception types shared across the solver stack."""

from __future__ import annotations


class BsvieError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BsvieError):
    """Invalid run configuration (schema violation, out-of-range parameter)."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class EvaluationDomainError(BsvieError):
    """Generator or free-term evaluation outside its admissible domain."""


class InnerIterationError(BsvieError):
    """Implicit per-step fixed point failed to reach tolerance."""

    def __init__(self, level: int, residual: float, limit: float, iterations: int):
        self.level = level
        self.residual = residual
        self.limit = limit
        self.iterations = iterations
        super().__init__(
            f"inner fixed point at step {level} stalled at residual "
            f"{residual:.3e} > {limit:.3e} after {iterations} iterations"
        )


class NumericBlowupError(BsvieError):
    """Non-finite values appeared during backward induction."""

    def __init__(self, level: int, what: str = "solution"):
        self.level = level
        self.what = what
        super().__init__(f"non-finite {what} values at step {level}")


class RegularizationNeededError(BsvieError):
    """Regression normal equations are singular and ridge is zero."""


class OuterIndexError(BsvieError):
    """Backend failure inside a family solve, annotated with the outer index."""

    def __init__(self, outer_index: int, cause: Exception):
        self.outer_index = outer_index
        self.cause = cause
        super().__init__(f"inner solve for outer index {outer_index} failed: {cause}")
