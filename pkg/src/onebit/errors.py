"""Exception hierarchy shared by every module of the package."""


class OneBitError(Exception):
    """Base class for all errors raised by :mod:`onebit`."""


class InvalidParameterError(OneBitError, ValueError):
    """A parameter is outside its admissible range or shapes disagree."""


class DegenerateInputError(OneBitError, ValueError):
    """An input is degenerate, e.g. normalizing the zero vector."""


class DegenerateScoreError(OneBitError, ArithmeticError):
    """The thresholded score vector ``H_k(A^T y)`` is identically zero."""


class AssumptionViolationError(OneBitError, ValueError):
    """A modelling assumption (such as a positive average correlation) fails."""
