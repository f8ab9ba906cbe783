# modules/errors.py
"""Exception types raised by the estimation pipeline."""
from typing import Optional, Sequence


class DataParseError(ValueError):
    """A CSV row could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, source: str = "csv"):
        self.detail = message
        self.line = line
        self.source = source
        where = f"{source} line {line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class DataValidationError(ValueError):
    """Parsed values violate a domain invariant."""


class NumericalOverflowError(ArithmeticError):
    """The infection-rate recursion produced a non-finite value."""

    def __init__(self, message: str, theta: Optional[Sequence[float]] = None):
        self.theta = None if theta is None else tuple(float(x) for x in theta)
        if self.theta is not None:
            message = f"{message} (theta={self.theta})"
        super().__init__(message)


class NoAdmissibleDrawsError(RuntimeError):
    """Every sampled parameter vector has zero likelihood."""


class TruncationError(ValueError):
    """A dataset has too few data years to truncate."""


class PoolingError(RuntimeError):
    """Joint reweighting left no usable candidate."""
