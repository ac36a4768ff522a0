"""A recurrent cell plus input encoding and an affine readout, for one task."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from core import cells, losses
from core import tensor as tc
from core.cells import CellKind, CellParams
from core.errors import CheckpointError, ContractError, DimensionError
from core.tensor import Tensor
from tasks.batch import TaskBatch

logger = logging.getLogger(__name__)

CELL_PREFIX = "cell."
READOUT_V = "readout.V"
READOUT_C = "readout.c"


class Readout(str, Enum):
    FINAL = "final"        # one regression value from the last hidden state
    PER_STEP = "per_step"  # class logits at every step


def one_hot(ids: np.ndarray, classes: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= classes):
        raise ContractError(f"category ids must lie in [0, {classes})")
    return np.eye(classes, dtype=np.float64)[ids]


@dataclass(frozen=True)
class SequenceModel:
    cell: CellParams
    V: Tensor
    c: Tensor
    readout: Readout
    input_classes: Optional[int] = None

    @property
    def output_size(self) -> int:
        return self.V.shape[1]

    def parameters(self) -> Dict[str, Tensor]:
        named = {CELL_PREFIX + k: t for k, t in self.cell.tensors.items()}
        named[READOUT_V] = self.V
        named[READOUT_C] = self.c
        return named

    def parameter_shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: t.shape for name, t in self.parameters().items()}

    def with_parameters(self, params: Mapping[str, Tensor]) -> "SequenceModel":
        expected = self.parameter_shapes()
        for name, shape in expected.items():
            if name not in params:
                raise CheckpointError(f"missing parameter {name}")
            if tuple(params[name].shape) != shape:
                raise CheckpointError(
                    f"parameter {name} has shape {tuple(params[name].shape)}, expected {shape}"
                )
        extra = set(params) - set(expected)
        if extra:
            raise CheckpointError(f"unexpected parameters {sorted(extra)}")
        cell_tensors = {
            name[len(CELL_PREFIX):]: tc.parameter(params[name].data, name=name[len(CELL_PREFIX):])
            for name in expected
            if name.startswith(CELL_PREFIX)
        }
        return replace(
            self,
            cell=self.cell.with_tensors(cell_tensors),
            V=tc.parameter(params[READOUT_V].data, name=READOUT_V),
            c=tc.parameter(params[READOUT_C].data, name=READOUT_C),
        )

    def encode(self, inputs: np.ndarray) -> Tensor:
        if self.input_classes is None:
            values = np.asarray(inputs, dtype=np.float64)
        else:
            values = one_hot(inputs, self.input_classes)
        if values.ndim != 3:
            raise DimensionError(f"encoded inputs must be batch x T x d, got {values.shape}")
        return tc.constant(values)

    def logits(self, batch: TaskBatch) -> Tensor:
        """Readout values: batch x K for FINAL, batch x T x K for PER_STEP."""
        states = cells.unroll_states(self.cell, self.encode(batch.inputs), batch.mask)
        if self.readout == Readout.FINAL:
            return tc.add(tc.matmul(states[-1].h, self.V), self.c)
        outputs = tc.stack_steps([s.h for s in states])
        b, t, n = outputs.shape
        flat = tc.add(tc.matmul(tc.reshape(outputs, (b * t, n)), self.V), self.c)
        return tc.reshape(flat, (b, t, self.output_size))

    def loss(self, batch: TaskBatch) -> Tensor:
        out = self.logits(batch)
        if self.readout == Readout.FINAL:
            return losses.mse(out, tc.constant(batch.targets))
        return losses.seq_cross_entropy(out, batch.targets, batch.mask)

    def step_nll(self, batch: TaskBatch) -> np.ndarray:
        """Per-step cross-entropy values (batch x T) for class readouts, without recording."""
        if self.readout != Readout.PER_STEP:
            raise ContractError("step_nll is defined for per-step class readouts only")
        logits = self.logits(batch).data
        b, t, k = logits.shape
        logp = tc.log_softmax_rows(logits.reshape(b * t, k))
        targets = np.where(batch.mask > 0, batch.targets, 0).reshape(-1)
        nll = -logp[np.arange(b * t), targets].reshape(b, t)
        return nll * batch.mask


def build_model(
    kind: "str | CellKind",
    input_size: int,
    n_hidden: int,
    output_size: int,
    readout: Readout,
    rng: np.random.Generator,
    input_classes: Optional[int] = None,
    forget_bias: float = 0.0,
    gru_candidate_bias: bool = True,
) -> SequenceModel:
    cell = cells.init_params(
        kind, input_size, n_hidden, rng, forget_bias=forget_bias, gru_candidate_bias=gru_candidate_bias
    )
    V = tc.parameter(
        rng.uniform(-cells.INPUT_INIT_SCALE, cells.INPUT_INIT_SCALE, size=(n_hidden, output_size)),
        name=READOUT_V,
    )
    c = tc.parameter(np.zeros(output_size), name=READOUT_C)
    return SequenceModel(cell=cell, V=V, c=c, readout=readout, input_classes=input_classes)


__all__ = ["Readout", "SequenceModel", "build_model", "one_hot", "CELL_PREFIX", "READOUT_V", "READOUT_C"]
