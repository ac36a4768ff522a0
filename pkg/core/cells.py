"""
Recurrent cell variants as pure step functions ``(params, state, x) -> state``.

Weights multiply from the right: ``x @ W`` with ``W`` of shape d x n and
``h @ U`` with ``U`` of shape n x n, so row-major batches flow straight through.
Parameter names:

  candidate     W, U, b
  LSTM gates    Wi Ui bi, Wf Uf bf, Wo Uo bo
  GRU gates     Wr Ur br, Wz Uz bz
  output layer  W_out, b_out   (PRU+ / LSTM+ feedforward layer)
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from core import tensor as tc
from core.errors import ContractError, DimensionError
from core.tensor import Tensor

INPUT_INIT_SCALE = 0.08
SATURATION = 30.0


class CellKind(str, Enum):
    RNN = "rnn"
    IRNN_ID = "irnn_id"
    GRU = "gru"
    LSTM = "lstm"
    LSTM_PLUS = "lstm_plus"
    PRU = "pru"
    PRU_PLUS = "pru_plus"

    @classmethod
    def parse(cls, value: "str | CellKind") -> "CellKind":
        if isinstance(value, CellKind):
            return value
        normalized = str(value).strip().lower().replace("-", "_")
        try:
            return cls(normalized)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ContractError(f"unknown cell kind {value!r}; valid kinds: {valid}") from None


LSTM_FAMILY = (CellKind.LSTM, CellKind.LSTM_PLUS, CellKind.PRU, CellKind.PRU_PLUS)
WITH_OUTPUT_LAYER = (CellKind.LSTM_PLUS, CellKind.PRU_PLUS)
WITHOUT_CANDIDATE_U = (CellKind.IRNN_ID, CellKind.PRU, CellKind.PRU_PLUS)


@dataclass(frozen=True)
class CellState:
    h: Tensor
    c: Tensor

    def __post_init__(self) -> None:
        if self.h.shape != self.c.shape:
            raise DimensionError(f"CellState: h {self.h.shape} and c {self.c.shape} differ")

    @classmethod
    def zeros(cls, batch: int, n_hidden: int) -> "CellState":
        return cls(tc.zeros(batch, n_hidden), tc.zeros(batch, n_hidden))


@dataclass(frozen=True)
class CellParams:
    kind: CellKind
    tensors: Dict[str, Tensor]
    gru_candidate_bias: bool = True

    @property
    def input_size(self) -> int:
        return self.tensors["W"].shape[0]

    @property
    def hidden_size(self) -> int:
        return self.tensors["W"].shape[1]

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def get(self, name: str) -> Optional[Tensor]:
        return self.tensors.get(name)

    def with_tensors(self, tensors: Mapping[str, Tensor]) -> "CellParams":
        missing = set(self.tensors) ^ set(tensors)
        if missing:
            raise ContractError(f"parameter names differ: {sorted(missing)}")
        return replace(self, tensors=dict(tensors))

    def count(self) -> int:
        return int(np.sum([t.data.size for t in self.tensors.values()]))


def _gate_names(kind: CellKind) -> Tuple[str, ...]:
    if kind in LSTM_FAMILY:
        return ("i", "f", "o")
    if kind == CellKind.GRU:
        return ("r", "z")
    return ()


def parameter_shapes(
    kind: "str | CellKind", d: int, n: int, gru_candidate_bias: bool = True
) -> Dict[str, Tuple[int, ...]]:
    """Names and shapes of every learnable tensor, in registration order."""
    kind = CellKind.parse(kind)
    shapes: Dict[str, Tuple[int, ...]] = {"W": (d, n)}
    if kind not in WITHOUT_CANDIDATE_U:
        shapes["U"] = (n, n)
    if kind != CellKind.GRU or gru_candidate_bias:
        shapes["b"] = (n,)
    for g in _gate_names(kind):
        shapes[f"W{g}"] = (d, n)
        shapes[f"U{g}"] = (n, n)
        shapes[f"b{g}"] = (n,)
    if kind in WITH_OUTPUT_LAYER:
        shapes["W_out"] = (n, n)
        shapes["b_out"] = (n,)
    return shapes


def param_count(kind: "str | CellKind", d: int, n: int, gru_candidate_bias: bool = True) -> int:
    return int(np.sum([np.prod(s) for s in parameter_shapes(kind, d, n, gru_candidate_bias).values()]))


def init_params(
    kind: "str | CellKind",
    d: int,
    n: int,
    rng: np.random.Generator,
    forget_bias: float = 0.0,
    gru_candidate_bias: bool = True,
) -> CellParams:
    """Input weights uniform on [-0.08, 0.08]; recurrent and output-layer matrices identity; biases zero."""
    kind = CellKind.parse(kind)
    if d < 1 or n < 1:
        raise ContractError(f"cell sizes must be positive, got d={d}, n={n}")
    tensors: Dict[str, Tensor] = {}
    for name, shape in parameter_shapes(kind, d, n, gru_candidate_bias).items():
        if name.startswith("W") and name != "W_out":
            values = rng.uniform(-INPUT_INIT_SCALE, INPUT_INIT_SCALE, size=shape)
        elif name.startswith("U") or name == "W_out":
            values = np.eye(n)
        elif name == "bf" and kind in LSTM_FAMILY:
            values = np.full(shape, float(forget_bias))
        else:
            values = np.zeros(shape)
        tensors[name] = tc.parameter(values, name=name)
    return CellParams(kind=kind, tensors=tensors, gru_candidate_bias=gru_candidate_bias)


def _check_input(p: CellParams, s: CellState, x: Tensor) -> None:
    if x.ndim != 2 or x.shape[1] != p.input_size:
        raise DimensionError(f"input {x.shape} does not match W {p['W'].shape}")
    if s.h.shape != (x.shape[0], p.hidden_size):
        raise DimensionError(f"state {s.h.shape} does not match batch {x.shape[0]} x {p.hidden_size}")


def _affine(x: Tensor, h: Tensor, W: Tensor, U: Tensor, b: Tensor) -> Tensor:
    return tc.add(tc.add(tc.matmul(x, W), tc.matmul(h, U)), b)


def _gate(p: CellParams, g: str, x: Tensor, h: Tensor) -> Tensor:
    return tc.sigmoid(_affine(x, h, p[f"W{g}"], p[f"U{g}"], p[f"b{g}"]))


def _lstm_gates(p: CellParams, x: Tensor, h: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    return _gate(p, "i", x, h), _gate(p, "f", x, h), _gate(p, "o", x, h)


def _output_layer(p: CellParams, h_hat: Tensor) -> Tensor:
    return tc.tanh(tc.add(tc.matmul(h_hat, p["W_out"]), p["b_out"]))


def _lstm_candidate(p: CellParams, x: Tensor, h: Tensor) -> Tensor:
    return tc.tanh(tc.add(tc.add(tc.matmul(h, p["U"]), tc.matmul(x, p["W"])), p["b"]))


def _pru_candidate(p: CellParams, x: Tensor) -> Tensor:
    return tc.tanh(tc.add(tc.matmul(x, p["W"]), p["b"]))


def _memory_update(p: CellParams, s: CellState, x: Tensor, candidate: Tensor) -> Tuple[Tensor, Tensor]:
    i, f, o = _lstm_gates(p, x, s.h)
    c_next = tc.add(tc.mul(f, s.c), tc.mul(i, candidate))
    h_hat = tc.mul(o, tc.tanh(c_next))
    return c_next, h_hat


def step_rnn(p: CellParams, s: CellState, x: Tensor) -> CellState:
    _check_input(p, s, x)
    h = tc.tanh(_affine(x, s.h, p["W"], p["U"], p["b"]))
    return CellState(h, s.c)


def step_irnn_id(p: CellParams, s: CellState, x: Tensor) -> CellState:
    _check_input(p, s, x)
    h = tc.tanh(tc.add(tc.add(tc.matmul(x, p["W"]), s.h), p["b"]))
    return CellState(h, s.c)


def step_gru(p: CellParams, s: CellState, x: Tensor) -> CellState:
    _check_input(p, s, x)
    r = _gate(p, "r", x, s.h)
    z = _gate(p, "z", x, s.h)
    pre = tc.add(tc.matmul(x, p["W"]), tc.matmul(tc.mul(r, s.h), p["U"]))
    if p.gru_candidate_bias:
        pre = tc.add(pre, p["b"])
    keep = tc.sub(tc.constant(np.ones(z.shape)), z)
    h = tc.add(tc.mul(keep, s.h), tc.mul(z, tc.tanh(pre)))
    return CellState(h, s.c)


def step_lstm(p: CellParams, s: CellState, x: Tensor) -> CellState:
    _check_input(p, s, x)
    c_next, h_next = _memory_update(p, s, x, _lstm_candidate(p, x, s.h))
    return CellState(h_next, c_next)


def step_pru(p: CellParams, s: CellState, x: Tensor) -> CellState:
    _check_input(p, s, x)
    c_next, h_next = _memory_update(p, s, x, _pru_candidate(p, x))
    return CellState(h_next, c_next)


def step_pru_plus(p: CellParams, s: CellState, x: Tensor) -> CellState:
    _check_input(p, s, x)
    c_next, h_hat = _memory_update(p, s, x, _pru_candidate(p, x))
    return CellState(_output_layer(p, h_hat), c_next)


def step_lstm_plus(p: CellParams, s: CellState, x: Tensor) -> CellState:
    _check_input(p, s, x)
    c_next, h_hat = _memory_update(p, s, x, _lstm_candidate(p, x, s.h))
    return CellState(_output_layer(p, h_hat), c_next)


STEPS: Dict[CellKind, Callable[[CellParams, CellState, Tensor], CellState]] = {
    CellKind.RNN: step_rnn,
    CellKind.IRNN_ID: step_irnn_id,
    CellKind.GRU: step_gru,
    CellKind.LSTM: step_lstm,
    CellKind.LSTM_PLUS: step_lstm_plus,
    CellKind.PRU: step_pru,
    CellKind.PRU_PLUS: step_pru_plus,
}


def step(p: CellParams, s: CellState, x: Tensor) -> CellState:
    return STEPS[p.kind](p, s, x)


def _carry(m: np.ndarray, new: Tensor, old: Tensor) -> Tensor:
    keep = tc.constant(np.broadcast_to(m[:, None], new.shape))
    hold = tc.constant(np.broadcast_to(1.0 - m[:, None], new.shape))
    return tc.add(tc.mul(keep, new), tc.mul(hold, old))


def unroll_states(p: CellParams, x_seq: Tensor, mask: np.ndarray) -> List[CellState]:
    """State after every step; masked-out steps carry the previous state through."""
    if x_seq.ndim != 3:
        raise DimensionError(f"unroll expects batch x T x d input, got {x_seq.shape}")
    batch, steps, _ = x_seq.shape
    if steps == 0:
        raise ContractError("cannot unroll an empty sequence (T = 0)")
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (batch, steps):
        raise DimensionError(f"mask {mask.shape} does not match input {x_seq.shape[:2]}")
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ContractError("mask entries must be 0 or 1")

    state = CellState.zeros(batch, p.hidden_size)
    states: List[CellState] = []
    step_fn = STEPS[p.kind]
    for t in range(steps):
        m = mask[:, t]
        if not m.any():
            states.append(state)
            continue
        new = step_fn(p, state, tc.take_step(x_seq, t))
        if not m.all():
            new = CellState(_carry(m, new.h, state.h), _carry(m, new.c, state.c))
        state = new
        states.append(state)
    return states


def unroll(p: CellParams, x_seq: Tensor, mask: np.ndarray) -> Tensor:
    """Hidden outputs at every step, shape batch x T x n."""
    return tc.stack_steps([s.h for s in unroll_states(p, x_seq, mask)])


__all__ = [
    "CellKind",
    "CellState",
    "CellParams",
    "LSTM_FAMILY",
    "WITH_OUTPUT_LAYER",
    "SATURATION",
    "parameter_shapes",
    "param_count",
    "init_params",
    "step_rnn",
    "step_irnn_id",
    "step_gru",
    "step_lstm",
    "step_pru",
    "step_pru_plus",
    "step_lstm_plus",
    "step",
    "unroll_states",
    "unroll",
]
