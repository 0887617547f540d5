"""Domain errors raised by the rpvf library."""


class RpvfError(Exception):
    """Base class for errors raised by rpvf."""


class ConvergenceError(RpvfError):
    """Value iteration ran out of iterations before reaching its tolerance."""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Value iteration did not converge after {iterations} iterations "
            f"(last residual {residual:.3e})"
        )


class SingularSystemError(RpvfError):
    """A linear system could not be solved to a finite answer."""

    def __init__(self, message: str, condition: float):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class CoverageError(RpvfError):
    """A sample set left some state-action pairs unvisited."""

    def __init__(self, missing: int, total: int):
        self.missing = missing
        self.total = total
        super().__init__(f"{missing} of {total} state-action pairs were never sampled")
