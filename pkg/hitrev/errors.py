"""
Exception hierarchy shared by the library, the harness and the CLI.
"""

from typing import Optional


class HitrevError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(HitrevError):
    """A model, table or parameter violates its invariants."""


class InputError(HitrevError):
    """Bad trajectory, word or input file.

    Args:
        message: Human-readable description
        line: 1-based line of the offending token, if known
        offset: 1-based column / symbol offset, if known
    """

    def __init__(self, message: str, line: Optional[int] = None, offset: Optional[int] = None):
        self.line = line
        self.offset = offset
        location = ""
        if line is not None:
            location = f" (line {line}" + (f", offset {offset})" if offset is not None else ")")
        super().__init__(message + location)


class NumericError(HitrevError):
    """An iterative solver did not converge."""


class IndeterminateError(HitrevError):
    """Censoring leaves no usable value to decide on."""


class DegenerateVarianceError(HitrevError):
    """The asymptotic variance vanishes, so a CLT check is meaningless."""


class ConfigError(HitrevError):
    """Invalid configuration value."""


class UsageError(HitrevError):
    """Invalid command line."""
