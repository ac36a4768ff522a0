"""
Versioned ``.prnn`` checkpoint container.

Layout: an ASCII header, one ``key=value`` per line, then one line per tensor
``tensor <section> <name> float64 <d0,d1,...>``, closed by ``end``. The raw
little-endian float64 payload follows in header order. Floats in the header
are written with ``repr`` so a load/save cycle reproduces the file exactly.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from core.errors import CheckpointError, StorageError
from core.optim import AdamState

logger = logging.getLogger(__name__)

MAGIC = "PRNN-CHECKPOINT"
FORMAT_VERSION = 1
SECTIONS = ("param", "adam_m", "adam_v")
_LE_F64 = np.dtype("<f8")


@dataclass
class Checkpoint:
    task: str
    cell: str
    iteration: int
    seed: int
    params: Dict[str, np.ndarray]
    adam: AdamState
    best_valid_loss: float = float("nan")
    best_iteration: int = 0
    stale_evals: int = 0
    version: int = FORMAT_VERSION
    extra: Dict[str, str] = field(default_factory=dict)

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: tuple(arr.shape) for name, arr in self.params.items()}


def _header_lines(ckpt: Checkpoint) -> List[str]:
    scalars = {
        "version": str(ckpt.version),
        "task": ckpt.task,
        "cell": ckpt.cell,
        "iteration": str(ckpt.iteration),
        "seed": str(ckpt.seed),
        "best_valid_loss": repr(float(ckpt.best_valid_loss)),
        "best_iteration": str(ckpt.best_iteration),
        "stale_evals": str(ckpt.stale_evals),
        "adam_lr": repr(float(ckpt.adam.lr)),
        "adam_beta1": repr(float(ckpt.adam.beta1)),
        "adam_beta2": repr(float(ckpt.adam.beta2)),
        "adam_eps": repr(float(ckpt.adam.eps)),
        "adam_t": str(ckpt.adam.t),
    }
    for key, value in sorted(ckpt.extra.items()):
        scalars[f"extra.{key}"] = value
    lines = [MAGIC] + [f"{k}={v}" for k, v in scalars.items()]
    for section, arrays in _sections(ckpt):
        for name, arr in arrays.items():
            dims = ",".join(str(d) for d in arr.shape)
            lines.append(f"tensor {section} {name} float64 {dims}")
    lines.append("end")
    return lines


def _sections(ckpt: Checkpoint):
    names = list(ckpt.params)
    yield "param", ckpt.params
    yield "adam_m", {n: ckpt.adam.m.get(n, np.zeros_like(ckpt.params[n])) for n in names}
    yield "adam_v", {n: ckpt.adam.v.get(n, np.zeros_like(ckpt.params[n])) for n in names}


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    header = ("\n".join(_header_lines(ckpt)) + "\n").encode("ascii")
    payload = b"".join(
        np.ascontiguousarray(arr, dtype=_LE_F64).tobytes()
        for _, arrays in _sections(ckpt)
        for arr in arrays.values()
    )
    return header + payload


def save_checkpoint(path: "str | Path", ckpt: Checkpoint) -> Path:
    """Write atomically (temp file, then rename)."""
    path = Path(path)
    blob = encode_checkpoint(ckpt)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as handle:
            handle.write(blob)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except OSError as e:
        logger.error(f"Error writing checkpoint {path}: {str(e)}")
        raise StorageError(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"Saved checkpoint {path} (iteration {ckpt.iteration})")
    return path


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Checkpoint:
    scalars: Dict[str, str] = {}
    layout: List[Tuple[str, str, Tuple[int, ...]]] = []
    cursor = 0
    first = True
    while True:
        end = blob.find(b"\n", cursor)
        if end < 0:
            raise CheckpointError(f"{source}: header is not terminated")
        try:
            line = blob[cursor:end].decode("ascii")
        except UnicodeDecodeError:
            raise CheckpointError(f"{source}: header is not ASCII") from None
        cursor = end + 1
        if first:
            if line != MAGIC:
                raise CheckpointError(f"{source}: not a prnn checkpoint")
            first = False
            continue
        if line == "end":
            break
        if line.startswith("tensor "):
            parts = line.split()
            if len(parts) != 5 or parts[1] not in SECTIONS or parts[3] != "float64":
                raise CheckpointError(f"{source}: bad tensor line {line!r}")
            try:
                shape = tuple(int(d) for d in parts[4].split(",") if d)
            except ValueError:
                raise CheckpointError(f"{source}: bad shape in {line!r}") from None
            layout.append((parts[1], parts[2], shape))
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"{source}: bad header line {line!r}")
        scalars[key] = value

    version = int(scalars.get("version", "-1"))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{source}: unsupported format version {version}")

    arrays: Dict[str, Dict[str, np.ndarray]] = {s: {} for s in SECTIONS}
    for section, name, shape in layout:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * _LE_F64.itemsize
        chunk = blob[cursor:cursor + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{source}: payload truncated at {section}/{name}")
        arrays[section][name] = np.frombuffer(chunk, dtype=_LE_F64).astype(np.float64).reshape(shape)
        cursor += nbytes
    if cursor != len(blob):
        raise CheckpointError(f"{source}: {len(blob) - cursor} trailing bytes")

    try:
        adam = AdamState(
            lr=float(scalars["adam_lr"]),
            beta1=float(scalars["adam_beta1"]),
            beta2=float(scalars["adam_beta2"]),
            eps=float(scalars["adam_eps"]),
            t=int(scalars["adam_t"]),
            m=arrays["adam_m"],
            v=arrays["adam_v"],
        )
        return Checkpoint(
            task=scalars["task"],
            cell=scalars["cell"],
            iteration=int(scalars["iteration"]),
            seed=int(scalars["seed"]),
            params=arrays["param"],
            adam=adam,
            best_valid_loss=float(scalars["best_valid_loss"]),
            best_iteration=int(scalars["best_iteration"]),
            stale_evals=int(scalars["stale_evals"]),
            version=version,
            extra={k[len("extra."):]: v for k, v in scalars.items() if k.startswith("extra.")},
        )
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"{source}: missing or invalid header field {e}") from e


def load_checkpoint(path: "str | Path") -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        logger.error(f"Error reading checkpoint {path}: {str(e)}")
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    return decode_checkpoint(blob, source=str(path))


def check_compatible(
    ckpt: Checkpoint,
    expected: Mapping[str, Tuple[int, ...]],
    cell: Optional[str] = None,
    task: Optional[str] = None,
) -> None:
    """Raise CheckpointError unless names and shapes match ``expected`` exactly."""
    if cell is not None and ckpt.cell != cell:
        raise CheckpointError(f"checkpoint holds a {ckpt.cell} cell, config asks for {cell}")
    if task is not None and ckpt.task != task:
        raise CheckpointError(f"checkpoint was trained on {ckpt.task}, config asks for {task}")
    have = ckpt.shapes()
    missing = sorted(set(expected) - set(have))
    extra = sorted(set(have) - set(expected))
    if missing or extra:
        raise CheckpointError(f"parameter names differ: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if tuple(shape) != have[name]:
            raise CheckpointError(f"parameter {name}: checkpoint {have[name]}, config {tuple(shape)}")


__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "Checkpoint",
    "encode_checkpoint",
    "decode_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "check_compatible",
]
