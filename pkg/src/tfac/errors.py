"""Exception types raised by the solver library."""


class ParameterDomainError(ValueError):
    """A parameter lies outside its admissible range."""


class InvariantViolation(RuntimeError):
    """A computed object failed one of its structural invariants.

    Raised for library bugs and for admissible-looking parameters on which a
    structural property genuinely fails, such as kernel monotonicity for a
    large offset.
    """


class SolverError(RuntimeError):
    """A time step could not be completed (factorization, residual, NaN)."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step
