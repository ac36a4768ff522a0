from __future__ import annotations

import csv
import logging
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

from core.errors import ContractError, PrnnError, StorageError
from models.run_models import COMPARE_COLUMNS, CompareRow, RunConfig, RunOutcome
from services.training_service import METRICS_FILE, TrainingService
from tasks.sources import TaskSource

logger = logging.getLogger(__name__)

COMPARE_FILE = "compare.csv"
PLOT_SCRIPT = "plot_compare.py"


def _median(values: Iterable[Optional[float]]) -> Optional[float]:
    present = [float(v) for v in values if v is not None]
    return statistics.median(present) if present else None


def _median_crossing(crossings: Iterable[Optional[int]]) -> Optional[float]:
    """Median iterations-to-threshold where a run that never crossed counts as infinite.

    None when there are no runs or the median itself never crossed.
    """
    values = [math.inf if c is None else float(c) for c in crossings]
    if not values:
        return None
    median = statistics.median(values)
    return None if math.isinf(median) else median


class CompareService:
    def __init__(self, training_service: Optional[TrainingService] = None, workers: int = 1):
        self.training_service = training_service or TrainingService()
        self.workers = max(1, workers)

    @staticmethod
    def job_config(index: int, cfg: RunConfig, seed: int) -> RunConfig:
        """Run config for one (configuration, seed) pair under output_dir/configNN."""
        return cfg.model_copy(
            update={"seed": seed, "output_dir": str(Path(cfg.output_dir) / f"config{index:02d}")}
        )

    def _run_one(self, cfg: RunConfig) -> RunOutcome:
        try:
            result = self.training_service.train(cfg)
            return RunOutcome(
                cell=cfg.cell,
                seed=cfg.seed,
                ok=True,
                iterations_to_threshold=result.iterations_to_threshold,
                final_valid_loss=result.final.valid_loss if result.final else result.best_valid_loss,
                best_valid_loss=result.best_valid_loss,
                metrics_path=result.metrics_path,
            )
        except PrnnError as e:
            logger.error(f"Run {cfg.run_name()} failed: {str(e)}")
            return RunOutcome(cell=cfg.cell, seed=cfg.seed, ok=False, error=str(e))

    def compare(self, cfgs: Sequence[RunConfig], seeds: Sequence[int]) -> List[CompareRow]:
        """One row per config: medians over seeds of iterations-to-threshold and losses."""
        if len(cfgs) < 2:
            raise ContractError("compare needs at least two configurations")
        if not seeds:
            raise ContractError("compare needs at least one seed")
        jobs = [(i, self.job_config(i, cfg, s)) for i, cfg in enumerate(cfgs) for s in seeds]
        logger.info(f"Comparing {len(cfgs)} configurations over seeds {list(seeds)} ({len(jobs)} runs)")
        with ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="prnn-compare") as pool:
            outcomes = list(pool.map(lambda job: self._run_one(job[1]), jobs))

        rows: List[CompareRow] = []
        for index, cfg in enumerate(cfgs):
            mine = [o for (i, _), o in zip(jobs, outcomes) if i == index]
            ok = [o for o in mine if o.ok]
            rows.append(
                CompareRow(
                    task=cfg.task,
                    T=cfg.T,
                    cell=cfg.cell,
                    seeds=list(seeds),
                    threshold=TaskSource(cfg).threshold(),
                    median_iterations_to_threshold=_median_crossing(o.iterations_to_threshold for o in ok),
                    crossed=sum(1 for o in ok if o.iterations_to_threshold is not None),
                    median_final_valid_loss=_median(o.final_valid_loss for o in ok),
                    median_best_valid_loss=_median(o.best_valid_loss for o in ok),
                    failures=len(mine) - len(ok),
                )
            )
        return rows

    def write_table(self, rows: Sequence[CompareRow], path: "str | Path") -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(COMPARE_COLUMNS)
                for row in rows:
                    writer.writerow(row.to_row())
        except OSError as e:
            logger.error(f"Error writing comparison table {path}: {str(e)}")
            raise StorageError(f"cannot write {path}: {e}") from e
        logger.info(f"Wrote comparison table {path}")
        return path

    def write_plot_script(self, cfgs: Sequence[RunConfig], seeds: Sequence[int], path: "str | Path") -> Path:
        """A matplotlib script plotting validation loss against iteration for every run."""
        path = Path(path)
        runs = []
        for index, cfg in enumerate(cfgs):
            for s in seeds:
                run = self.job_config(index, cfg, s)
                metrics = self.training_service.run_dir(run) / METRICS_FILE
                runs.append((f"{run.cell.value} seed {s}", str(metrics)))
        threshold = TaskSource(cfgs[0]).threshold()
        lines = [
            "import csv",
            "import matplotlib.pyplot as plt",
            "",
            f"RUNS = {runs!r}",
            f"THRESHOLD = {threshold!r}",
            "",
            "for label, path in RUNS:",
            "    with open(path, newline='') as handle:",
            "        rows = list(csv.DictReader(handle))",
            "    plt.plot([int(r['iteration']) for r in rows], [float(r['valid_loss']) for r in rows], label=label)",
            "plt.axhline(THRESHOLD, color='k', linestyle='--', label='memoryless baseline')",
            "plt.xlabel('iteration')",
            f"plt.ylabel({cfgs[0].units.value!r})",
            "plt.legend()",
            "plt.savefig('compare.png', dpi=150)",
            "",
        ]
        try:
            path.write_text("\n".join(lines), encoding="utf-8")
        except OSError as e:
            raise StorageError(f"cannot write {path}: {e}") from e
        return path


__all__ = ["CompareService", "COMPARE_FILE", "PLOT_SCRIPT"]
