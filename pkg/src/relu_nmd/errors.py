"""Exception and warning types raised across the package."""


class ReluNMDError(Exception):
    """Base class for all package errors."""


class ParameterError(ReluNMDError, ValueError):
    """An argument is outside its admissible range."""


class ConvergenceError(ReluNMDError):
    """An iterative kernel exhausted its budget before meeting its tolerance.

    The best iterate found so far is kept in ``best`` so callers can decide
    whether it is good enough.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class RankDeficiencyWarning(UserWarning):
    """A least-squares factor was numerically rank deficient."""


class DataFormatError(ReluNMDError):
    """Base class for malformed input files."""


class BadMagicError(DataFormatError):
    pass


class TruncatedPayloadError(DataFormatError):
    pass


class DimensionOverflowError(DataFormatError):
    pass


class LabelCountMismatchError(DataFormatError):
    pass


class EmptyMatrixError(DataFormatError):
    pass


class CsvParseError(DataFormatError):
    """A CSV token could not be parsed; carries 1-based line and column."""

    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
