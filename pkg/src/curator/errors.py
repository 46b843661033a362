"""Exception types shared across the toolkit.

The CLI maps each category to a distinct exit code, so library code
raises the most specific class that applies.  Plain ``OSError`` is left
alone and treated as an I/O failure by callers.
"""


class CuratorError(Exception):
    """Base class for all toolkit errors."""


class FormatError(CuratorError):
    """Malformed or inconsistent on-disk data (bad magic, truncation, ...)."""


class ValidationError(CuratorError):
    """Invalid in-memory values or arguments (shape, range, missing labels)."""


class NumericError(CuratorError):
    """Numerically degenerate computation (singular covariance, zero variance)."""


class PolicyError(CuratorError):
    """Operation refused by a safety policy rather than by invalid input."""
