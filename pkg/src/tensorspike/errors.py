"""Exception hierarchy.

Two families matter to the CLI: ``UsageError`` subclasses map to exit code 2
and ``NumericError`` subclasses map to exit code 3.
"""

from __future__ import annotations


class TensorSpikeError(Exception):
    """Base class for all package errors."""


class UsageError(TensorSpikeError, ValueError):
    """Invalid input supplied by the caller."""


class InvalidIndexError(UsageError, IndexError):
    """Index tuple is out of range or contains repeated entries."""


class ShapeError(UsageError):
    """Array dimensions do not match."""


class FormatError(UsageError):
    """Malformed ``.tns`` file or header."""


class MissingTruthError(UsageError):
    """An operation needs the planted signal but none was given."""


class UnsupportedError(UsageError):
    """The requested combination of options is not implemented."""


class NotApplicableError(UsageError):
    """The operation is only defined for a restricted class of priors."""


class CapacityError(UsageError):
    """Enumeration state space exceeds the hard cap."""


class NumericError(TensorSpikeError, ArithmeticError):
    """Numerical failure during a computation."""


class MemoryCapError(NumericError, MemoryError):
    """Allocation would exceed the configured memory cap."""


class NonNormalizableError(NumericError):
    """Tilted measure cannot be normalized (e.g. 1 + A <= 0)."""


class DegenerateChannelError(NumericError):
    """Channel has zero Fisher information at w = 0."""


class BracketError(NumericError):
    """Bisection bracket does not straddle the transition."""


class NoSpinodalError(NumericError):
    """Closed-form spinodals do not exist for these parameters."""


class DivergenceError(NumericError):
    """An iteration produced non-finite values."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
