"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the region where the model is defined."""


class InfeasibleError(ValueError):
    """No protocol satisfies the requested bounds or timing."""


class NonMonotoneError(InfeasibleError):
    """Feasibility is not monotone in t_f over the bisection bracket.

    ``scan`` holds the (t_f, feasible) pairs of the diagnostic sweep.
    """

    def __init__(self, message, scan):
        super().__init__(message)
        self.scan = scan


class SimulationAbort(RuntimeError):
    """Integration stopped because the radius left r > 0.

    ``t_fail`` is the time of the offending step and ``record`` (if set)
    holds the partial trajectory up to that point.
    """

    def __init__(self, message, t_fail, record=None):
        super().__init__(message)
        self.t_fail = t_fail
        self.record = record


class ConvergenceError(RuntimeError):
    """The optimal-control solver did not meet its terminal tolerances."""

    def __init__(self, message, best=None, residuals=None):
        super().__init__(message)
        self.best = best
        self.residuals = residuals


class UndefinedCorrectionError(ValueError):
    """The single-shot correction windows cannot be computed."""
