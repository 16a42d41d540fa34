"""Exception hierarchy shared by all modules."""


class TrudingerError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(TrudingerError, ValueError):
    pass


class DomainError(TrudingerError, ValueError):
    """A point or argument lies outside the set where an operation is defined."""


class PositivityError(DomainError):
    pass


class WrongRegimeError(InvalidInputError):
    """The (p, n) pair does not match the barrier family requested."""


class UnsupportedDomainError(TrudingerError):
    pass


class MarginError(InvalidInputError):
    """The margin eps is too large for the data (needs m - 2*eps > 0)."""


class DataInconsistencyError(InvalidInputError):
    pass


class MarginSearchFailure(TrudingerError):
    pass


class OnRidgeError(DomainError):
    """Point is within the guard band of a piece interface."""


class StepRejectedError(TrudingerError):
    pass


class DivergenceError(TrudingerError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ExpressionError(InvalidInputError):
    """Syntax or name error in a data expression; ``offset`` is a byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataError(InvalidInputError):
    """A data expression was evaluated outside its domain (log/sqrt of a non-positive value)."""
