"""Exception hierarchy shared by all cotdr modules."""


class CotdrError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(CotdrError, ValueError):
    """An argument violates an operation's precondition."""


class FormatError(CotdrError, ValueError):
    """A file or stream does not follow the expected layout."""


class UnsupportedVersionError(FormatError):
    """A trace file declares a format version this reader does not know."""


class FitError(CotdrError, RuntimeError):
    """A least-squares fit did not converge.

    Attributes
    ----------
    best_residual : float
        RMS residual of the best parameter set seen before giving up.
    """

    def __init__(self, message, best_residual=float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


class PeakAssignmentError(CotdrError):
    """One or more lag windows did not contain exactly one correlation peak.

    Attributes
    ----------
    windows : dict
        Offending window label -> number of peaks found in it.
    """

    def __init__(self, message, windows=None):
        super().__init__(message)
        self.windows = dict(windows or {})


class MissingReferenceError(PeakAssignmentError):
    """No peak was found in the near-end reference window."""
