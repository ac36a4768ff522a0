"""Exception hierarchy shared by every prnn module."""
from typing import Optional


class PrnnError(Exception):
    """Base class for all library errors."""


class DimensionError(PrnnError):
    """Operand shapes are incompatible."""


class ContractError(PrnnError):
    """A documented precondition was violated."""


class NonFiniteError(PrnnError):
    """An operation produced NaN or Inf."""


class CorpusError(PrnnError):
    """The text corpus is empty or unreadable."""


class CheckpointError(PrnnError):
    """A checkpoint is malformed or does not fit the requested model."""


class StorageError(PrnnError):
    """An output location cannot be written."""


class ConfigError(PrnnError):
    """Configuration values, files or flags are invalid."""


class TrainingAbortedError(PrnnError):
    """Training stopped because the loss diverged."""

    def __init__(self, message: str, iteration: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration


__all__ = [
    "PrnnError",
    "DimensionError",
    "ContractError",
    "NonFiniteError",
    "CorpusError",
    "CheckpointError",
    "StorageError",
    "ConfigError",
    "TrainingAbortedError",
]
