"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`DataError` to 2, everything
numeric to 3.
"""


class InvariantMomentsError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(InvariantMomentsError, ValueError):
    """An argument lies outside the domain of the function."""


class RangeError(InvariantMomentsError, ValueError):
    """A target value (kurtosis, skewness, ...) is not attainable."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class InfiniteMomentError(InvariantMomentsError, ArithmeticError):
    """A requested population moment does not exist."""


class WindowError(InvariantMomentsError, ValueError):
    """The sample is too small for the trimming window of an L-statistic."""


class DegeneratePairError(InvariantMomentsError, ArithmeticError):
    """The two location parameters defining a d value coincide."""


class InconsistentByClampingError(InvariantMomentsError, ArithmeticError):
    """A percentile needed for calibration lies outside the clamping window."""


class CalibrationError(InvariantMomentsError, RuntimeError):
    """A calibration table could not be built or failed a build-time check."""


class ConvergenceError(InvariantMomentsError, ArithmeticError):
    """An iteration produced a non-finite value.

    ``trace`` holds the iterates computed before the failure.
    """

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class DataError(InvariantMomentsError, ValueError):
    """Input data could not be read or is unusable."""
