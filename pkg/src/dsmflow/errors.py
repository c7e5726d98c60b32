"""Exception hierarchy shared by every module."""


class DSMError(Exception):
    """Base class for all package errors."""


class UsageError(DSMError, ValueError):
    """Invalid arguments: dimension mismatch, out-of-range parameters."""


class EvaluationError(DSMError, ArithmeticError):
    """An operator produced a non-finite value."""

    def __init__(self, message, index=None, t=None):
        super().__init__(message)
        self.index = index
        self.t = t


class ResolventSingular(DSMError, ArithmeticError):
    """The shifted system ``A(u) + a I`` is singular to working precision."""

    def __init__(self, abs_a, condition, t=None):
        self.abs_a = abs_a
        self.condition = condition
        self.t = t
        where = "" if t is None else f" at t={t:.6g}"
        super().__init__(
            f"shifted system singular{where}: |a|={abs_a:.3e}, "
            f"condition estimate {condition:.3e}; increase r(0)"
        )


class NoConvergence(DSMError, RuntimeError):
    """Damped Newton failed to reach the residual tolerance."""

    def __init__(self, message, residual, iterations, last=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.last = last


class NondifferentiablePoint(DSMError, ValueError):
    """The norm is not differentiable at the requested point (``w = 0``)."""


class DegenerateSample(DSMError, ValueError):
    """Every sampled pair was too close to fit a Hölder law."""
