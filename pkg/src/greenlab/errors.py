"""Exception hierarchy shared by all greenlab modules."""


class GreenlabError(Exception):
    """Base class for every error raised by greenlab."""


class DomainError(GreenlabError, ValueError):
    """A point or schedule lies outside the domain of a chart."""


class UsageError(GreenlabError, ValueError):
    """Arguments are inconsistent with the operation's preconditions."""


class IndeterminacyError(GreenlabError, ArithmeticError):
    """All components of a rational map vanish at the requested point."""


class ResourceError(GreenlabError, RuntimeError):
    """A configured degree or monomial cap was exceeded."""


class NumericalInstabilityError(GreenlabError, RuntimeError):
    """Repeated numerical estimates disagree beyond the voting threshold."""


class ConvergenceError(GreenlabError, RuntimeError):
    """An iterative scheme did not converge within its budget.

    The partial iteration trace and last residual are attached so callers can
    still serialize what was computed.
    """

    def __init__(self, message, trace=None, residual=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
        self.residual = residual


class UnsupportedError(GreenlabError, NotImplementedError):
    """The operation is outside the supported model/dimension range."""


class InternalError(GreenlabError, RuntimeError):
    """An internal invariant was violated."""
