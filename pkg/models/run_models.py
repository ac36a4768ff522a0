from __future__ import annotations

from enum import Enum
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import settings
from core.cells import CellKind


class TaskKind(str, Enum):
    ADDING = "adding"
    COPYING = "copying"
    CHARLM = "charlm"


class LossUnits(str, Enum):
    MSE = "mse"
    NATS = "nats"


SYNTHETIC_HIDDEN = 128
CHARLM_HIDDEN = 256
CHARLM_FULL_HIDDEN = 1000
SYNTHETIC_BATCH = 50
CHARLM_BATCH = 32


class RunConfig(BaseModel):
    """One training run. Every field is also a CLI flag of the same name."""

    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    task: TaskKind = TaskKind.ADDING
    cell: CellKind = CellKind.PRU
    T: int = Field(100, ge=1, description="sequence length (delay for copying)")
    n_hidden: Optional[int] = Field(None, ge=1, description="hidden units; task default when unset")
    batch_size: Optional[int] = Field(None, ge=1, description="sequences per batch; task default when unset")
    max_iterations: int = Field(3000, ge=0, description="hard cap on parameter updates")
    epochs: Optional[int] = Field(None, ge=0, description="cap in epochs (batches_per_epoch updates for synthetic tasks)")
    batches_per_epoch: int = Field(100, ge=1, description="synthetic tasks: fresh batches per epoch")
    lr: float = Field(1e-3, gt=0, description="Adam learning rate")
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    clip: float = Field(1.0, gt=0, description="gradients are clamped to [-clip, clip]")
    seed: int = Field(1, ge=0)
    output_dir: str = Field(default_factory=lambda: settings.output_dir)
    eval_interval: int = Field(100, ge=1, description="iterations between validation passes")
    valid_batches: int = Field(4, ge=1, description="synthetic tasks: batches in the fixed validation set")
    patience: int = Field(10, ge=0, description="evaluations without improvement before stopping; 0 disables")
    forget_bias: float = Field(0.0, description="initial forget-gate bias (1.0 is the common variant)")
    gru_candidate_bias: bool = Field(True, description="include b in the GRU candidate")
    corpus_path: str = Field(default_factory=lambda: settings.corpus_path)
    unit: Literal["char", "word"] = "char"
    max_vocab: Optional[int] = Field(None, ge=2)
    max_len: int = Field(100, ge=2, description="charlm: longest training window")
    max_sentence_len: Optional[int] = Field(None, ge=2, description="charlm: drop longer sentences")
    valid_fraction: float = Field(0.1, ge=0, lt=1)
    test_fraction: float = Field(0.1, ge=0, lt=1)
    length_buckets: str = "1-50,51-100,101-"
    full_scale: bool = Field(False, description="charlm: 1000 hidden units instead of the desk-scale 256")
    wallclock: bool = Field(False, description="write elapsed seconds into metrics (breaks byte determinism)")
    prefetch: int = Field(0, ge=0, description="batches produced ahead on a worker thread")
    baseline_log_base: Literal["e", "2"] = "e"
    threshold: Optional[float] = Field(None, gt=0, description="convergence threshold override for compare")

    @field_validator("cell", mode="before")
    @classmethod
    def _parse_cell(cls, value):
        if isinstance(value, str):
            return value.strip().lower().replace("-", "_")
        return value

    @model_validator(mode="after")
    def _resolve_task_defaults(self) -> "RunConfig":
        synthetic = self.task != TaskKind.CHARLM
        if self.n_hidden is None:
            if synthetic:
                self.n_hidden = SYNTHETIC_HIDDEN
            else:
                self.n_hidden = CHARLM_FULL_HIDDEN if self.full_scale else CHARLM_HIDDEN
        if self.batch_size is None:
            self.batch_size = SYNTHETIC_BATCH if synthetic else CHARLM_BATCH
        if self.task == TaskKind.ADDING and self.T < 2:
            raise ValueError("adding task needs T >= 2")
        if self.valid_fraction + self.test_fraction >= 1:
            raise ValueError("valid_fraction + test_fraction must be below 1")
        return self

    @property
    def units(self) -> LossUnits:
        return LossUnits.MSE if self.task == TaskKind.ADDING else LossUnits.NATS

    @property
    def iteration_budget(self) -> int:
        """Updates allowed by max_iterations and, for synthetic tasks, epochs."""
        if self.epochs is not None and self.task != TaskKind.CHARLM:
            return min(self.max_iterations, self.epochs * self.batches_per_epoch)
        return self.max_iterations

    def run_name(self) -> str:
        return f"{self.task.value}_T{self.T}_{self.cell.value}_seed{self.seed}"


METRICS_COLUMNS = ("iteration", "epoch", "seconds", "train_loss", "valid_loss", "units", "cell", "seed")


class MetricsRecord(BaseModel):
    iteration: int
    epoch: int
    seconds: float
    train_loss: float
    valid_loss: float
    units: LossUnits
    cell: CellKind
    seed: int

    def to_row(self) -> List[str]:
        return [
            str(self.iteration),
            str(self.epoch),
            repr(float(self.seconds)),
            repr(float(self.train_loss)),
            repr(float(self.valid_loss)),
            self.units.value,
            self.cell.value,
            str(self.seed),
        ]

    @classmethod
    def from_row(cls, row: Dict[str, str]) -> "MetricsRecord":
        return cls(**row)


class TrainResult(BaseModel):
    run_name: str
    final: Optional[MetricsRecord] = None
    best_valid_loss: float
    best_iteration: int
    iterations_run: int
    iterations_to_threshold: Optional[int] = None
    stopped_early: bool = False
    metrics_path: str
    checkpoint_path: str


class EvalResult(BaseModel):
    valid_loss: float
    test_loss: Optional[float] = None
    units: LossUnits
    valid_perplexity: Optional[float] = None
    test_perplexity: Optional[float] = None
    length_buckets: Dict[str, float] = Field(default_factory=dict)


COMPARE_COLUMNS = (
    "task",
    "T",
    "cell",
    "seeds",
    "threshold",
    "median_iterations_to_threshold",
    "crossed",
    "median_final_valid_loss",
    "median_best_valid_loss",
    "failures",
)


class RunOutcome(BaseModel):
    cell: CellKind
    seed: int
    ok: bool
    iterations_to_threshold: Optional[int] = None
    final_valid_loss: Optional[float] = None
    best_valid_loss: Optional[float] = None
    metrics_path: Optional[str] = None
    error: Optional[str] = None


class CompareRow(BaseModel):
    task: TaskKind
    T: int
    cell: CellKind
    seeds: List[int]
    threshold: float
    median_iterations_to_threshold: Optional[float] = None
    crossed: int = 0
    median_final_valid_loss: Optional[float] = None
    median_best_valid_loss: Optional[float] = None
    failures: int = 0

    def to_row(self) -> List[str]:
        def fmt(x: Optional[float]) -> str:
            return "NA" if x is None else repr(float(x))

        return [
            self.task.value,
            str(self.T),
            self.cell.value,
            ";".join(str(s) for s in self.seeds),
            repr(float(self.threshold)),
            fmt(self.median_iterations_to_threshold),
            f"{self.crossed}/{len(self.seeds)}",
            fmt(self.median_final_valid_loss),
            fmt(self.median_best_valid_loss),
            f"FAILED({self.failures})" if self.failures else "0",
        ]
