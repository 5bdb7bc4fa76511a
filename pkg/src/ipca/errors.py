"""Exception hierarchy shared by every module of the package."""


class IpcaError(Exception):
    """Base class for all errors raised by :mod:`ipca`."""


class InvalidInput(IpcaError, ValueError):
    pass


class ShapeError(IpcaError, ValueError):
    pass


class NotPositiveDefinite(IpcaError, ValueError):
    pass


class InvalidPenalty(IpcaError, ValueError):
    pass


class NonexistentMLE(IpcaError):
    pass


class DegenerateScale(IpcaError, ValueError):
    pass


class AlreadyCentered(IpcaError):
    pass


class AlignmentError(IpcaError):
    pass


class InvalidMask(IpcaError, ValueError):
    pass


class IoError(IpcaError, OSError):
    pass


class ParseError(IpcaError, ValueError):
    """A CSV cell could not be parsed as a float.

    ``row`` and ``col`` are 1-based file coordinates: the header line is
    row 1 and the sample-id column is column 1.
    """

    def __init__(self, message, row, col, path=None):
        super().__init__(message)
        self.row = row
        self.col = col
        self.path = path


class NoConvergence(IpcaError):
    """An iterative solver hit its iteration limit.

    The last iterate and its residual are kept so callers may decide to use
    them anyway.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
