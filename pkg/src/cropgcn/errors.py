"""Exception hierarchy shared by every module."""


class CropGcnError(Exception):
    """Base class for all errors raised by this package."""


class InputError(CropGcnError, ValueError):
    """Caller supplied arguments that violate a precondition (shapes, ranges)."""


class DataError(CropGcnError, ValueError):
    """Array contents are unusable, e.g. NaN or infinite entries."""


class NumericError(CropGcnError, ArithmeticError):
    """A computation diverged or produced non-finite values."""


class FormatError(CropGcnError, ValueError):
    """A file on disk is malformed. ``offset`` is the byte position at fault, if known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
