"""
Dense float64 tensors with tape-based reverse-mode differentiation.

Every public operation returns a new read-only Tensor. While a Tape is active
(``with Tape() as tape:``) operations touching a tensor that requires a
gradient append a record holding the operands and the adjoint rule; ``backward``
walks those records in reverse.
"""
from __future__ import annotations

import contextvars
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import ContractError, DimensionError, NonFiniteError

DTYPE = np.float64

Adjoint = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_active_tape: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "prnn_active_tape", default=None
)


def _frozen(values: np.ndarray, op: str) -> np.ndarray:
    arr = np.array(values, dtype=DTYPE, order="C")
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    arr.setflags(write=False)
    return arr


class Tensor:
    """Row-major float64 array; values never change after construction."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = _frozen(np.array(data, dtype=DTYPE), name or "tensor")
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _from_op(cls, values: np.ndarray, op: str, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = _frozen(values, op)
        out.requires_grad = requires_grad
        out.name = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def parameter(values, name: Optional[str] = None) -> Tensor:
    return Tensor(values, requires_grad=True, name=name)


def zeros(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape, dtype=DTYPE))


@dataclass(frozen=True)
class Node:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    adjoint: Adjoint


class Tape:
    """Append-only record of differentiable operations, in execution order."""

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self._token: Optional[contextvars.Token] = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node) -> None:
        self.nodes.append(node)


def _emit(op: str, values: np.ndarray, inputs: Sequence[Tensor], adjoint: Adjoint) -> Tensor:
    needs_grad = any(t.requires_grad for t in inputs)
    out = Tensor._from_op(values, op, needs_grad)
    tape = _active_tape.get()
    if needs_grad and tape is not None:
        tape.record(Node(op, tuple(inputs), out, adjoint))
    return out


class Gradient(Mapping):
    """Per-leaf gradients keyed by leaf name; each has its leaf's shape."""

    def __init__(self, grads: Dict[str, np.ndarray]):
        self._grads = {}
        for name, g in grads.items():
            arr = np.array(g, dtype=DTYPE)
            arr.setflags(write=False)
            self._grads[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._grads[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._grads)

    def __len__(self) -> int:
        return len(self._grads)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Gradient":
        return Gradient({name: fn(g) for name, g in self._grads.items()})


def backward(
    tape: Tape,
    root: Tensor,
    leaves: Union[Mapping[str, Tensor], Sequence[Tensor]],
) -> Gradient:
    """Gradient of a scalar root with respect to each requested leaf.

    Leaves the root does not depend on receive zeros. The tape is left untouched,
    so sweeping it again yields the same bits.
    """
    if root.data.size != 1 or root.ndim > 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if not isinstance(leaves, Mapping):
        leaves = {str(i): t for i, t in enumerate(leaves)}

    keep = {id(t) for t in leaves.values()}
    grads: Dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(tape.nodes):
        key = id(node.output)
        g = grads.get(key)
        if g is None:
            continue
        if key not in keep:
            del grads[key]
        for operand, contribution in zip(node.inputs, node.adjoint(g)):
            if contribution is None or not operand.requires_grad:
                continue
            slot = id(operand)
            if slot in grads:
                grads[slot] = grads[slot] + contribution
            else:
                grads[slot] = contribution

    result: Dict[str, np.ndarray] = {}
    for name, leaf in leaves.items():
        g = grads.get(id(leaf))
        result[name] = np.zeros_like(leaf.data) if g is None else np.reshape(g, leaf.shape)
    return Gradient(result)


# ---------------------------------------------------------------------------
# matrix product
# ---------------------------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.data, b.data

    def adjoint(g: np.ndarray):
        ga = g @ bv.T if a.requires_grad else None
        gb = av.T @ g if b.requires_grad else None
        return ga, gb

    return _emit("matmul", av @ bv, (a, b), adjoint)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------
def _broadcast_kind(a: Tensor, b: Tensor, op: str) -> str:
    if a.shape == b.shape:
        return "same"
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return "row_b"
    if a.ndim == 1 and b.ndim == 2 and b.shape[1] == a.shape[0]:
        return "row_a"
    raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _fold(g: np.ndarray, kind: str, side: str) -> np.ndarray:
    if (kind == "row_b" and side == "b") or (kind == "row_a" and side == "a"):
        return g.sum(axis=0)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    kind = _broadcast_kind(a, b, "add")

    def adjoint(g: np.ndarray):
        return _fold(g, kind, "a"), _fold(g, kind, "b")

    return _emit("add", a.data + b.data, (a, b), adjoint)


def sub(a: Tensor, b: Tensor) -> Tensor:
    kind = _broadcast_kind(a, b, "sub")

    def adjoint(g: np.ndarray):
        return _fold(g, kind, "a"), -_fold(g, kind, "b")

    return _emit("sub", a.data - b.data, (a, b), adjoint)


def mul(a: Tensor, b: Tensor) -> Tensor:
    kind = _broadcast_kind(a, b, "mul")
    av, bv = a.data, b.data

    def adjoint(g: np.ndarray):
        ga = _fold(g * bv, kind, "a") if a.requires_grad else None
        gb = _fold(g * av, kind, "b") if b.requires_grad else None
        return ga, gb

    return _emit("mul", av * bv, (a, b), adjoint)


def scale(t: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def adjoint(g: np.ndarray):
        return (g * factor,)

    return _emit("scale", t.data * factor, (t,), adjoint)


def tanh(t: Tensor) -> Tensor:
    y = np.tanh(t.data)

    def adjoint(g: np.ndarray):
        return (g * (1.0 - y * y),)

    return _emit("tanh", y, (t,), adjoint)


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=DTYPE)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(t: Tensor) -> Tensor:
    y = stable_sigmoid(t.data)

    def adjoint(g: np.ndarray):
        return (g * y * (1.0 - y),)

    return _emit("sigmoid", y, (t,), adjoint)


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


def elementwise(op: str, *operands: Tensor) -> Tensor:
    """Dispatch by tag: add, sub, mul take two operands; tanh, sigmoid take one."""
    fn = _ELEMENTWISE.get(op)
    if fn is None:
        raise ContractError(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}")
    return fn(*operands)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------
def _check_axis(t: Tensor, axis: Optional[int], op: str) -> None:
    if axis is not None and not (0 <= axis < t.ndim):
        raise DimensionError(f"{op}: axis {axis} out of range for shape {t.shape}")


def _spread(g: np.ndarray, shape: Tuple[int, ...], axis: Optional[int]) -> np.ndarray:
    if axis is not None:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def sum(t: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    _check_axis(t, axis, "sum")
    shape = t.shape

    def adjoint(g: np.ndarray):
        return (_spread(g, shape, axis),)

    return _emit("sum", np.sum(t.data, axis=axis), (t,), adjoint)


def mean(t: Tensor, axis: Optional[int] = None) -> Tensor:
    _check_axis(t, axis, "mean")
    shape = t.shape
    count = t.data.size if axis is None else shape[axis]

    def adjoint(g: np.ndarray):
        return (_spread(g, shape, axis) / count,)

    return _emit("mean", np.mean(t.data, axis=axis), (t,), adjoint)


def reductions(op: str, t: Tensor, axis: Optional[int] = None) -> Tensor:
    if op == "sum":
        return sum(t, axis)
    if op == "mean":
        return mean(t, axis)
    raise ContractError(f"unknown reduction {op!r}; expected 'sum' or 'mean'")


# ---------------------------------------------------------------------------
# sequence plumbing
# ---------------------------------------------------------------------------
def take_step(seq: Tensor, index: int) -> Tensor:
    """Slice ``seq[:, index, :]`` from a batch x time x feature tensor."""
    if seq.ndim != 3:
        raise DimensionError(f"take_step expects a rank-3 tensor, got {seq.shape}")
    if not 0 <= index < seq.shape[1]:
        raise DimensionError(f"take_step: step {index} outside {seq.shape}")
    shape = seq.shape

    def adjoint(g: np.ndarray):
        if not seq.requires_grad:
            return (None,)
        full = np.zeros(shape, dtype=DTYPE)
        full[:, index, :] = g
        return (full,)

    return _emit("take_step", seq.data[:, index, :], (seq,), adjoint)


def stack_steps(steps: Sequence[Tensor]) -> Tensor:
    """Stack batch x feature tensors along a new time axis (axis 1)."""
    if not steps:
        raise ContractError("stack_steps needs at least one tensor")
    first = steps[0].shape
    for t in steps:
        if t.shape != first or t.ndim != 2:
            raise DimensionError(f"stack_steps: mismatched shapes {first} and {t.shape}")

    def adjoint(g: np.ndarray):
        return tuple(g[:, i, :] for i in range(len(steps)))

    return _emit("stack_steps", np.stack([t.data for t in steps], axis=1), tuple(steps), adjoint)


def reshape(t: Tensor, shape: Tuple[int, ...]) -> Tensor:
    src = t.shape
    try:
        values = t.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {src} as {shape}") from exc

    def adjoint(g: np.ndarray):
        return (g.reshape(src),)

    return _emit("reshape", values, (t,), adjoint)


def log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Per-row negative log-likelihood (nats) of integer targets under softmax(logits)."""
    if logits.ndim != 2:
        raise DimensionError(f"softmax_cross_entropy expects N x K logits, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.shape[0] != logits.shape[0]:
        raise DimensionError(
            f"softmax_cross_entropy: {logits.shape[0]} rows but {targets.shape[0]} targets"
        )
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise ContractError(f"targets must lie in [0, {logits.shape[1]})")
    logp = log_softmax_rows(logits.data)
    rows = np.arange(targets.shape[0])
    nll = -logp[rows, targets]

    def adjoint(g: np.ndarray):
        probs = np.exp(logp)
        probs[rows, targets] -= 1.0
        return (probs * g[:, None],)

    return _emit("softmax_cross_entropy", nll, (logits,), adjoint)


__all__ = [
    "DTYPE",
    "Tensor",
    "Tape",
    "Node",
    "Gradient",
    "constant",
    "parameter",
    "zeros",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "tanh",
    "sigmoid",
    "stable_sigmoid",
    "elementwise",
    "sum",
    "mean",
    "reductions",
    "take_step",
    "stack_steps",
    "reshape",
    "log_softmax_rows",
    "softmax_cross_entropy",
]
