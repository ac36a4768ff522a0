from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import List, Tuple

import numpy as np

from core.errors import ContractError, StorageError
from models.run_models import TaskKind
from tasks.adding import AddingBatch, gen_adding
from tasks.copying import CopyingBatch, gen_copying

logger = logging.getLogger(__name__)

ADDING_COLUMNS = ("sequence", "step", "value", "marker", "target")
COPYING_COLUMNS = ("sequence", "step", "input", "target")


def export_filename(task: TaskKind, T: int, seed: int) -> str:
    return f"{task.value}_T{T}_seed{seed}.csv"


def _adding_rows(b: AddingBatch) -> List[List[str]]:
    rows = []
    for i in range(b.inputs.shape[0]):
        target = repr(float(b.targets[i, 0]))
        for t in range(b.inputs.shape[1]):
            rows.append([str(i), str(t), repr(float(b.inputs[i, t, 0])), str(int(b.inputs[i, t, 1])), target])
    return rows


def _copying_rows(b: CopyingBatch) -> List[List[str]]:
    rows = []
    for i in range(b.inputs.shape[0]):
        for t in range(b.inputs.shape[1]):
            rows.append([str(i), str(t), str(int(b.inputs[i, t])), str(int(b.targets[i, t]))])
    return rows


def _read_grid(path: "str | Path", columns: Tuple[str, ...]) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != columns:
            raise ContractError(f"{path}: expected columns {','.join(columns)}")
        return list(reader)


def read_adding_csv(path: "str | Path") -> AddingBatch:
    rows = _read_grid(path, ADDING_COLUMNS)
    batch = 1 + max(int(r["sequence"]) for r in rows)
    steps = 1 + max(int(r["step"]) for r in rows)
    inputs = np.zeros((batch, steps, 2))
    targets = np.zeros((batch, 1))
    for r in rows:
        i, t = int(r["sequence"]), int(r["step"])
        inputs[i, t, 0] = float(r["value"])
        inputs[i, t, 1] = float(r["marker"])
        targets[i, 0] = float(r["target"])
    return AddingBatch(inputs, targets)


def read_copying_csv(path: "str | Path") -> CopyingBatch:
    rows = _read_grid(path, COPYING_COLUMNS)
    batch = 1 + max(int(r["sequence"]) for r in rows)
    steps = 1 + max(int(r["step"]) for r in rows)
    inputs = np.zeros((batch, steps), dtype=np.int64)
    targets = np.zeros((batch, steps), dtype=np.int64)
    for r in rows:
        i, t = int(r["sequence"]), int(r["step"])
        inputs[i, t] = int(r["input"])
        targets[i, t] = int(r["target"])
    return CopyingBatch(inputs, targets)


class TaskExportService:
    """Writes one generated batch as a long-format CSV for inspection."""

    def export(self, task: TaskKind, T: int, seed: int, batch: int, out_dir: "str | Path") -> Path:
        if task == TaskKind.ADDING:
            columns, rows = ADDING_COLUMNS, _adding_rows(gen_adding(seed, batch, T))
        elif task == TaskKind.COPYING:
            columns, rows = COPYING_COLUMNS, _copying_rows(gen_copying(seed, batch, T))
        else:
            raise ContractError(f"gen-task supports adding and copying, not {task.value}")

        path = Path(out_dir) / export_filename(task, T, seed)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(columns)
                writer.writerows(rows)
        except OSError as e:
            logger.error(f"Error writing task file {path}: {str(e)}")
            raise StorageError(f"cannot write {path}: {e}") from e
        logger.info(f"Wrote {batch} {task.value} sequences to {path}")
        return path


__all__ = [
    "TaskExportService",
    "read_adding_csv",
    "read_copying_csv",
    "export_filename",
    "ADDING_COLUMNS",
    "COPYING_COLUMNS",
]
