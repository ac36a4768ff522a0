from __future__ import annotations

import logging
import math
import os
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from core import tensor as tc
from core.errors import (
    CheckpointError,
    NonFiniteError,
    StorageError,
    TrainingAbortedError,
)
from core.model import Readout, SequenceModel, build_model
from core.optim import Adam, AdamState
from core.tensor import Tape
from models.run_models import (
    EvalResult,
    LossUnits,
    MetricsRecord,
    RunConfig,
    TaskKind,
    TrainResult,
)
from storage.checkpoint_store import Checkpoint, check_compatible, load_checkpoint, save_checkpoint
from storage.metrics_store import MetricsSink
from tasks import corpus as corpus_mod
from tasks.batch import TaskBatch
from tasks.sources import TaskSource
from tasks.seeding import rng_for
from tasks.streams import prefetch

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
BEST_CHECKPOINT = "best.prnn"
LAST_CHECKPOINT = "last.prnn"


def dataset_loss(model: SequenceModel, batches: List[TaskBatch]) -> float:
    """Held-out loss: mean batch MSE for regression, per-token NLL for class readouts."""
    if model.readout == Readout.FINAL:
        return float(np.mean([model.loss(b).item() for b in batches]))
    total = 0.0
    count = 0.0
    for b in batches:
        total += float(model.step_nll(b).sum())
        count += float(b.mask.sum())
    return total / count


class TrainingService:
    # ------------------------------------------------------------------
    # setup helpers
    # ------------------------------------------------------------------
    def source_for(self, cfg: RunConfig) -> TaskSource:
        return TaskSource(cfg)

    def build_initial_model(self, cfg: RunConfig, source: TaskSource) -> SequenceModel:
        shape = source.model_shape()
        return build_model(
            cfg.cell,
            shape.input_size,
            cfg.n_hidden,
            shape.output_size,
            shape.readout,
            rng_for(cfg.seed, "init"),
            input_classes=shape.input_classes,
            forget_bias=cfg.forget_bias,
            gru_candidate_bias=cfg.gru_candidate_bias,
        )

    def run_dir(self, cfg: RunConfig) -> Path:
        return Path(cfg.output_dir) / cfg.run_name()

    def _prepare_output(self, cfg: RunConfig) -> Path:
        out = self.run_dir(cfg)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"Error creating output directory {out}: {str(e)}")
            raise StorageError(f"cannot create output directory {out}: {e}") from e
        if not os.access(out, os.W_OK):
            raise StorageError(f"output directory {out} is not writable")
        return out

    def _checkpoint(
        self,
        cfg: RunConfig,
        model: SequenceModel,
        adam: AdamState,
        iteration: int,
        best: float,
        best_iteration: int,
        stale: int,
    ) -> Checkpoint:
        return Checkpoint(
            task=cfg.task.value,
            cell=cfg.cell.value,
            iteration=iteration,
            seed=cfg.seed,
            params={name: t.data for name, t in model.parameters().items()},
            adam=adam,
            best_valid_loss=best,
            best_iteration=best_iteration,
            stale_evals=stale,
            extra={"n_hidden": str(cfg.n_hidden), "T": str(cfg.T)},
        )

    def restore(self, cfg: RunConfig, source: TaskSource, ckpt: Checkpoint) -> SequenceModel:
        """Initial model with the checkpoint's parameters, after a shape check."""
        model = self.build_initial_model(cfg, source)
        check_compatible(ckpt, model.parameter_shapes(), cell=cfg.cell.value, task=cfg.task.value)
        return model.with_parameters({name: tc.constant(arr) for name, arr in ckpt.params.items()})

    # ------------------------------------------------------------------
    # train
    # ------------------------------------------------------------------
    def train(self, cfg: RunConfig, resume: Optional[str] = None) -> TrainResult:
        """Train with Adam + clipping; checkpoint at the best validation loss."""
        out = self._prepare_output(cfg)
        source = self.source_for(cfg)
        valid = source.valid_set()
        budget = source.iteration_budget()
        threshold = source.threshold()

        model = self.build_initial_model(cfg, source)
        adam = AdamState.fresh(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
        start = 0
        if resume:
            ckpt = load_checkpoint(resume)
            model = self.restore(cfg, source, ckpt)
            adam = ckpt.adam
            start = ckpt.iteration
            best, best_iteration, stale = ckpt.best_valid_loss, ckpt.best_iteration, ckpt.stale_evals
            logger.info(f"Resuming {cfg.run_name()} from iteration {start}")
        else:
            best = dataset_loss(model, valid)
            best_iteration, stale = 0, 0
            save_checkpoint(out / BEST_CHECKPOINT, self._checkpoint(cfg, model, adam, 0, best, 0, 0))

        optimizer = Adam(adam, -cfg.clip, cfg.clip)
        logger.info(
            f"Training {cfg.run_name()}: {budget} iterations, n_hidden={cfg.n_hidden}, "
            f"batch={cfg.batch_size}, threshold={threshold:.5f}"
        )

        started = time.perf_counter()
        window: List[float] = []
        final: Optional[MetricsRecord] = None
        crossed_at: Optional[int] = None
        stopped_early = False
        iteration = start
        with MetricsSink(out / METRICS_FILE, resume=bool(resume)) as sink:
            batches = prefetch(source.train_batches(start), cfg.prefetch)
            try:
                for iteration in range(start + 1, budget + 1):
                    batch = next(batches)
                    model, loss_value = self._update(model, optimizer, batch, iteration)
                    window.append(loss_value)

                    if iteration % cfg.eval_interval != 0 and iteration != budget:
                        continue
                    valid_loss = dataset_loss(model, valid)
                    elapsed = time.perf_counter() - started
                    final = MetricsRecord(
                        iteration=iteration,
                        epoch=source.epoch_of(iteration),
                        seconds=round(elapsed, 3) if cfg.wallclock else 0.0,
                        train_loss=float(np.mean(window)),
                        valid_loss=valid_loss,
                        units=cfg.units,
                        cell=cfg.cell,
                        seed=cfg.seed,
                    )
                    sink.append(final)
                    window = []
                    logger.info(
                        f"{cfg.run_name()} it={iteration} train={final.train_loss:.5f} "
                        f"valid={valid_loss:.5f} ({elapsed:.1f}s)"
                    )
                    if crossed_at is None and valid_loss < threshold:
                        crossed_at = iteration
                    if valid_loss < best:
                        best, best_iteration, stale = valid_loss, iteration, 0
                        save_checkpoint(
                            out / BEST_CHECKPOINT,
                            self._checkpoint(cfg, model, optimizer.state, iteration, best, best_iteration, 0),
                        )
                    else:
                        stale += 1
                        if cfg.patience and stale >= cfg.patience:
                            logger.info(
                                f"Early stop at iteration {iteration}: no improvement in {stale} evaluations"
                            )
                            stopped_early = True
                            break
            finally:
                batches.close()

        save_checkpoint(
            out / LAST_CHECKPOINT,
            self._checkpoint(cfg, model, optimizer.state, iteration, best, best_iteration, stale),
        )
        return TrainResult(
            run_name=cfg.run_name(),
            final=final,
            best_valid_loss=best,
            best_iteration=best_iteration,
            iterations_run=iteration - start,
            iterations_to_threshold=crossed_at,
            stopped_early=stopped_early,
            metrics_path=str(out / METRICS_FILE),
            checkpoint_path=str(out / BEST_CHECKPOINT),
        )

    def _update(
        self, model: SequenceModel, optimizer: Adam, batch: TaskBatch, iteration: int
    ) -> Tuple[SequenceModel, float]:
        params = model.parameters()
        try:
            with Tape() as tape:
                loss = model.loss(batch)
            grads = tc.backward(tape, loss, params)
            new_params = optimizer.step(params, grads)
        except NonFiniteError as e:
            logger.error(f"Non-finite values at iteration {iteration}: {str(e)}")
            raise TrainingAbortedError(
                f"loss became non-finite at iteration {iteration} ({e})", iteration=iteration
            ) from e
        loss_value = loss.item()
        if not math.isfinite(loss_value):
            raise TrainingAbortedError(f"loss became non-finite at iteration {iteration}", iteration=iteration)
        return model.with_parameters(new_params), loss_value

    # ------------------------------------------------------------------
    # evaluate
    # ------------------------------------------------------------------
    def evaluate(self, checkpoint: "str | Path | Checkpoint", cfg: RunConfig) -> EvalResult:
        """Held-out losses of a checkpoint; parameters are never modified."""
        ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
        source = self.source_for(cfg)
        model = self.restore(cfg, source, ckpt)
        valid_loss = dataset_loss(model, source.valid_set())
        test_batches = source.test_set()
        test_loss = dataset_loss(model, test_batches)
        result = EvalResult(valid_loss=valid_loss, test_loss=test_loss, units=cfg.units)
        if cfg.units == LossUnits.NATS:
            result.valid_perplexity = math.exp(valid_loss)
            result.test_perplexity = math.exp(test_loss)
        if cfg.task == TaskKind.CHARLM:
            result.length_buckets = self.length_bucket_nll(model, test_batches, cfg.length_buckets)
        logger.info(f"Evaluated {cfg.run_name()}: valid={valid_loss:.5f} test={test_loss:.5f}")
        return result

    def length_bucket_nll(self, model: SequenceModel, batches: List[TaskBatch], spec: str) -> Dict[str, float]:
        """Per-token NLL grouped by the length of the sentence each window came from."""
        buckets = corpus_mod.parse_buckets(spec)
        totals = {corpus_mod.bucket_label(b): [0.0, 0.0] for b in buckets}
        for batch in batches:
            nll = model.step_nll(batch)
            for row, length in enumerate(batch.lengths):
                for bucket in buckets:
                    lo, hi = bucket
                    if length >= lo and (hi is None or length <= hi):
                        slot = totals[corpus_mod.bucket_label(bucket)]
                        slot[0] += float(nll[row].sum())
                        slot[1] += float(batch.mask[row].sum())
                        break
        return {label: total / count for label, (total, count) in totals.items() if count > 0}


__all__ = ["TrainingService", "dataset_loss", "METRICS_FILE", "BEST_CHECKPOINT", "LAST_CHECKPOINT"]
