"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to.
"""


class LmdError(Exception):
    exit_code = 1
    kind = "error"


class ConfigError(LmdError, ValueError):
    exit_code = 2
    kind = "config"


class ParameterError(ConfigError):
    kind = "parameter"


class ShapeError(ConfigError):
    kind = "shape"


class FormatError(LmdError):
    """Malformed snapshot or weights file."""

    exit_code = 3
    kind = "format"

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class TruncationError(FormatError):
    kind = "truncated"


class DatasetError(LmdError):
    exit_code = 3
    kind = "dataset"


class AlignmentError(LmdError, ValueError):
    exit_code = 3
    kind = "alignment"

    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = tuple(offending)


class NumericError(LmdError, ArithmeticError):
    exit_code = 4
    kind = "numeric"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DomainError(NumericError, ValueError):
    kind = "domain"


class TapeError(LmdError, RuntimeError):
    kind = "tape"


class DegenerateCurveError(LmdError, ValueError):
    kind = "degenerate_curve"
