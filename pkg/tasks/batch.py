"""Padded mini-batch shared by every task."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.errors import DimensionError


@dataclass(frozen=True)
class TaskBatch:
    """inputs: batch x T (ids) or batch x T x d (floats); mask: batch x T of 0/1."""

    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    lengths: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.mask.shape != self.inputs.shape[:2]:
            raise DimensionError(f"mask {self.mask.shape} does not cover inputs {self.inputs.shape}")

    @property
    def size(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def steps(self) -> int:
        return int(self.inputs.shape[1])
