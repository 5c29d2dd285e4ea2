"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: parameter/usage problems exit 1,
format and data problems exit 2, numeric failures exit 3.
"""


class LcmdError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(LcmdError, ValueError):
    """An argument is outside its documented domain or shapes disagree."""


class FormatError(LcmdError):
    """A file does not conform to its declared format."""


class TruncationError(FormatError):
    """A binary payload is shorter or longer than its header declares."""


class ParseError(FormatError):
    """A text file contains a malformed line."""

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


class DataError(LcmdError):
    """Input data is unusable (non-finite values, too few frames, ...)."""


class RangeError(DataError):
    """A time interval falls outside the span of the audio."""


class DegeneracyError(DataError):
    """The problem collapses (single speaker, empty cluster, ...)."""


class NumericError(LcmdError, ArithmeticError):
    """A numerical routine failed (e.g. a matrix that must be SPD is not)."""
