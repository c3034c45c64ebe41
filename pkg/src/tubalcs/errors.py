"""Exception types raised across the package."""


class TubalCSError(Exception):
    """Base class for every error raised by :mod:`tubalcs`."""


class DimensionMismatch(TubalCSError, ValueError):
    pass


class SymmetryViolation(TubalCSError):
    """A spectral stack is not conjugate symmetric, so it has no real inverse.

    This points to a bug upstream rather than bad user input.
    """


class NotOrthogonal(TubalCSError, ValueError):
    pass


class TooLarge(TubalCSError, ValueError):
    pass


class ZeroTensor(TubalCSError, ValueError):
    pass


class InvalidSpec(TubalCSError, ValueError):
    pass


class RankExceeded(TubalCSError, ValueError):
    pass


class InvalidSchedule(TubalCSError, ValueError):
    pass


class DegenerateInit(TubalCSError):
    """Every initialization measurement was truncated away."""


class UnderdeterminedSystem(TubalCSError, ValueError):
    pass


class SingularSystem(TubalCSError):
    pass


class SingularPreconditioner(TubalCSError):
    pass


class NonFinite(TubalCSError):
    """An iterate contained NaN or Inf. ``trace`` holds what was recorded."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ParseError(TubalCSError, ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ValidationError(TubalCSError, ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
