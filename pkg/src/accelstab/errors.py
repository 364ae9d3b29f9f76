"""Exception hierarchy.

Everything raised on purpose by this package derives from ``AccelStabError``.
``ValidationError`` covers bad inputs and violated preconditions; the CLI maps
it to exit code 2.
"""


class AccelStabError(Exception):
    pass


class ValidationError(AccelStabError, ValueError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NonSymmetric(ValidationError):
    pass


class NotPositiveDefinite(ValidationError):
    pass


class InvalidParameter(ValidationError):
    pass


class ZeroTime(ValidationError):
    """An Euler step was requested at k = 0, where t = delta * k vanishes."""


class SingularTime(ValidationError):
    """The ODE vector field was evaluated at t <= 0."""


class NoMatrixForm(ValidationError):
    """The scheme has no per-mode transition matrix (RK4, Nesterov-C)."""


class OrderTooLow(ValidationError):
    pass


class AssumptionViolated(ValidationError):
    pass


class EmptyTrace(ValidationError):
    pass


class NonPositiveGap(ValidationError):
    pass


class WindowTooNarrow(ValidationError):
    pass


class NumericalError(AccelStabError, ArithmeticError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class ClaimViolated(AccelStabError, AssertionError):
    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k
