"""Append-only metrics CSV."""
from __future__ import annotations

import csv
import logging
import os
from pathlib import Path
from typing import List, Optional, TextIO

from core.errors import StorageError
from models.run_models import METRICS_COLUMNS, MetricsRecord

logger = logging.getLogger(__name__)


class MetricsSink:
    """Writes the header on open and flushes every row; iterations must increase."""

    def __init__(self, path: "str | Path", resume: bool = False):
        self.path = Path(path)
        self.resume = resume
        self._handle: Optional[TextIO] = None
        self._writer = None
        self._last_iteration: Optional[int] = None

    def __enter__(self) -> "MetricsSink":
        self.open()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def open(self) -> None:
        """Start a fresh file, or with ``resume`` continue an existing one after its last row."""
        appending = self.resume and self.path.exists()
        try:
            if appending:
                previous = read_metrics(self.path)
                if previous:
                    self._last_iteration = previous[-1].iteration
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = open(self.path, "a" if appending else "w", newline="", encoding="utf-8")
        except OSError as e:
            logger.error(f"Error opening metrics file {self.path}: {str(e)}")
            raise StorageError(f"cannot write metrics to {self.path}: {e}") from e
        self._writer = csv.writer(self._handle, lineterminator="\n")
        if not appending:
            self._writer.writerow(METRICS_COLUMNS)
        self._handle.flush()

    @property
    def last_iteration(self) -> Optional[int]:
        return self._last_iteration

    def append(self, record: MetricsRecord) -> None:
        if self._handle is None:
            raise StorageError(f"metrics sink {self.path} is not open")
        if self._last_iteration is not None and record.iteration <= self._last_iteration:
            raise StorageError(
                f"metrics must be appended by increasing iteration "
                f"({record.iteration} after {self._last_iteration})"
            )
        self._writer.writerow(record.to_row())
        self._handle.flush()
        self._last_iteration = record.iteration

    def close(self) -> None:
        if self._handle is not None:
            self._handle.flush()
            os.fsync(self._handle.fileno())
            self._handle.close()
            self._handle = None


def read_metrics(path: "str | Path") -> List[MetricsRecord]:
    with open(path, newline="", encoding="utf-8") as handle:
        return [MetricsRecord.from_row(row) for row in csv.DictReader(handle)]


__all__ = ["MetricsSink", "read_metrics"]
