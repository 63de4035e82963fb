"""Exception taxonomy shared by every module.

The split matters for the CLI, which maps each family to a distinct exit
code: usage/config problems exit 2, data-format problems exit 3, and
numerical aborts exit 4.
"""


class CrescendoError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(CrescendoError, ValueError):
    """Shapes, extents or channel counts do not fit together."""


class UsageError(CrescendoError, ValueError):
    """An argument value is outside the operation's contract."""


class FormatError(CrescendoError):
    """A data or checkpoint file is malformed."""


class NumericalError(CrescendoError, ArithmeticError):
    """A computation produced non-finite values."""


class ConfigError(UsageError):
    """A config file failed to parse; names the key and line involved."""

    def __init__(self, message, key=None, line=None):
        detail = message
        if key is not None:
            detail += f" (key: {key}"
            detail += f", line {line})" if line is not None else ")"
        elif line is not None:
            detail += f" (line {line})"
        super().__init__(detail)
        self.key = key
        self.line = line
