"""Exception hierarchy shared by every solver in the package."""


class SharpOTError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SharpOTError, ValueError):
    """Malformed array input (shape, sign, finiteness, normalization)."""


class InvalidParameterError(SharpOTError, ValueError):
    """A scalar parameter is outside its admissible range."""


class OutOfScaleError(SharpOTError, ValueError):
    """Instance too large for an oracle that is only meant for small problems."""


class NonConvergenceError(SharpOTError, RuntimeError):
    """An iterative solver hit its iteration budget.

    Attributes
    ----------
    residual : float
        Last measured stopping quantity.
    iterate : object
        Last iterate, when meaningful.
    """

    def __init__(self, message, residual=float("nan"), iterate=None):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


class NumericalOverflowError(SharpOTError, FloatingPointError):
    """Linear-domain scaling produced non-finite values."""


class DegenerateInstanceError(SharpOTError, ArithmeticError):
    """A linear system that should be positive definite is numerically singular."""


class StallError(NonConvergenceError):
    """Every line search of a descent method failed at the minimum step."""

    def __init__(self, message, trace=None, iterate=None):
        super().__init__(message, iterate=iterate)
        self.trace = trace
