"""Adding task: regress the sum of two marked values in a random sequence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from core.errors import ContractError
from tasks.batch import TaskBatch


@dataclass(frozen=True)
class AddingBatch:
    """inputs[..., 0] uniform values, inputs[..., 1] markers; targets batch x 1."""

    inputs: np.ndarray
    targets: np.ndarray

    @property
    def marker_positions(self) -> np.ndarray:
        return np.argwhere(self.inputs[:, :, 1] == 1.0)[:, 1].reshape(-1, 2)

    def to_task_batch(self) -> TaskBatch:
        batch, steps, _ = self.inputs.shape
        return TaskBatch(self.inputs, self.targets, np.ones((batch, steps)))


def gen_adding(seed: int, batch: int, T: int) -> AddingBatch:
    """First marker in [0, ceil(T/2)), second in [ceil(T/2), T)."""
    if T < 2:
        raise ContractError(f"adding task needs T >= 2, got {T}")
    if batch < 1:
        raise ContractError(f"batch must be >= 1, got {batch}")
    rng = np.random.default_rng(seed)
    half = (T + 1) // 2
    values = rng.random((batch, T))
    first = rng.integers(0, half, size=batch)
    second = rng.integers(half, T, size=batch)
    markers = np.zeros((batch, T))
    rows = np.arange(batch)
    markers[rows, first] = 1.0
    markers[rows, second] = 1.0
    targets = (values[rows, first] + values[rows, second]).reshape(batch, 1)
    return AddingBatch(np.stack([values, markers], axis=2), targets)
