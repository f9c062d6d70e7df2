"""Exception hierarchy shared by every stage of the pipeline."""


class ChdError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ChdError):
    """A CSV row could not be parsed (wrong arity, non-numeric text)."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SchemaError(ChdError):
    """A value violates the declared schema (unknown category, out of range)."""


class CleaningError(ChdError):
    """Raised when a column cannot be imputed because it is entirely missing."""


class SplitError(ChdError):
    pass


class SelectionError(ChdError):
    pass


class ParameterError(ChdError, ValueError):
    """An argument is outside its permitted domain."""


class ShapeError(ChdError, ValueError):
    pass


class NumericError(ChdError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""

    def __init__(self, message, index=None):
        if index is not None:
            message = f"{message} (index {index})"
        super().__init__(message)
        self.index = index


class DivergedError(NumericError):
    pass


class ConfigError(ChdError):
    pass


class ModelLoadError(ChdError):
    pass


class VersionError(ModelLoadError):
    pass
