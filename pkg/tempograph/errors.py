"""
Exception hierarchy for the tempograph engine.
"""

from typing import Optional


class TempographError(Exception):
    """Base class for every error raised by tempograph."""


class _LineError(TempographError):
    """An error tied to a line of an input file."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParseError(_LineError):
    """A dataset row could not be parsed."""


class OrderingError(_LineError):
    """Timestamps went backwards."""


class SchemaError(_LineError):
    """Rows disagree on their layout (feature arity, result row keys)."""


class ConfigurationError(TempographError):
    """Invalid experiment, split or scheduler configuration."""


class ContractViolation(TempographError):
    """A caller broke an operation's precondition."""


class DimensionError(TempographError):
    """Shape mismatch inside a tensor op."""

    def __init__(self, op: str, message: str):
        self.op = op
        super().__init__(f"{op}: {message}")


class MetricError(TempographError):
    """A ranking metric was asked for on a degenerate label set."""


class UnsupportedError(TempographError):
    """Requested variant is not implemented (e.g. analyzer hop 3)."""


class DatasetNotFoundError(TempographError):
    """Dataset name or path does not resolve to a readable file."""


class CheckpointError(TempographError):
    """Checkpoint missing, wrong version, or mismatched names/shapes."""
