"""Copying task: reproduce ten leading symbols after a delay of T steps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from core.errors import ContractError
from tasks.baselines import COPY_ALPHABET, COPY_MEMORY
from tasks.batch import TaskBatch

BLANK = 8
CUE = 9
INPUT_CLASSES = 10
OUTPUT_CLASSES = 9


@dataclass(frozen=True)
class CopyingBatch:
    inputs: np.ndarray
    targets: np.ndarray

    def to_task_batch(self) -> TaskBatch:
        return TaskBatch(self.inputs, self.targets, np.ones(self.inputs.shape))


def gen_copying(seed: int, batch: int, T: int) -> CopyingBatch:
    """Sequences of length T+20 over C0..C9; targets over C0..C8."""
    if T < 1:
        raise ContractError(f"copying task needs T >= 1, got {T}")
    if batch < 1:
        raise ContractError(f"batch must be >= 1, got {batch}")
    rng = np.random.default_rng(seed)
    length = T + 2 * COPY_MEMORY
    memory = rng.integers(0, COPY_ALPHABET, size=(batch, COPY_MEMORY))
    inputs = np.full((batch, length), BLANK, dtype=np.int64)
    inputs[:, :COPY_MEMORY] = memory
    inputs[:, T + COPY_MEMORY - 1] = CUE
    targets = np.full((batch, length), BLANK, dtype=np.int64)
    targets[:, T + COPY_MEMORY:] = memory
    return CopyingBatch(inputs, targets)


def check_copying_layout(inputs: np.ndarray, targets: np.ndarray) -> None:
    """Raise ContractError when a batch breaks the copying layout."""
    length = inputs.shape[1]
    T = length - 2 * COPY_MEMORY
    if T < 1:
        raise ContractError(f"sequence length {length} is too short for the copying task")
    head = inputs[:, :COPY_MEMORY]
    if head.min() < 0 or head.max() >= COPY_ALPHABET:
        raise ContractError("leading symbols must be drawn from C0..C7")
    if not (inputs[:, COPY_MEMORY:T + COPY_MEMORY - 1] == BLANK).all():
        raise ContractError("delay positions must be C8")
    if not (inputs[:, T + COPY_MEMORY - 1] == CUE).all():
        raise ContractError("cue C9 missing")
    if not (inputs[:, T + COPY_MEMORY:] == BLANK).all():
        raise ContractError("recall positions of the input must be C8")
    if not (targets[:, :T + COPY_MEMORY] == BLANK).all():
        raise ContractError("targets before recall must be C8")
    if not (targets[:, T + COPY_MEMORY:] == head).all():
        raise ContractError("recalled targets differ from the leading symbols")
