"""Exception hierarchy shared by every module of the package."""


class OtapError(Exception):
    """Base class for all errors raised by otap."""


class ShapeMismatch(OtapError, ValueError):
    pass


class NonFiniteEntry(OtapError, ValueError):
    pass


class InvalidMode(OtapError, ValueError):
    pass


class ColsMismatch(ShapeMismatch):
    pass


class SizeMismatch(ShapeMismatch):
    pass


class ConvergenceFailure(OtapError, RuntimeError):
    """The SVD backend did not converge."""


class ZeroMatrix(OtapError, ValueError):
    pass


class ZeroTensor(OtapError, ValueError):
    pass


class InvalidOrder(OtapError, ValueError):
    pass


class RankTooLarge(OtapError, ValueError):
    """An orthonormal mode has fewer rows than the requested rank."""


class DegenerateInitializer(OtapError, ValueError):
    pass


class DegenerateSigma(OtapError, ValueError):
    pass


class InfeasibleInit(OtapError, ValueError):
    pass


class TooManyColumns(OtapError, ValueError):
    pass


class TensorFormatError(OtapError, ValueError):
    """Malformed tensor text file; carries the offending line and column."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)
