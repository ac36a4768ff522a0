"""
Batch sources for one run: training batches addressed by iteration, and fixed
validation / test sets.

Synthetic tasks draw a fresh batch per iteration from a seed derived from
(run seed, iteration), so any iteration can be regenerated without replaying
the ones before it. The language-model source walks shuffled epochs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional

import numpy as np

from core.errors import CorpusError
from core.model import Readout
from models.run_models import RunConfig, TaskKind
from tasks import corpus as corpus_mod
from tasks.adding import gen_adding
from tasks.baselines import ADDING_BASELINE, copying_baseline
from tasks.batch import TaskBatch
from tasks.copying import INPUT_CLASSES, OUTPUT_CLASSES, gen_copying
from tasks.corpus import CharCorpus
from tasks.seeding import derive_seed

logger = logging.getLogger(__name__)

CHARLM_THRESHOLD_FRACTION = 0.8


@dataclass(frozen=True)
class ModelShape:
    input_size: int
    output_size: int
    readout: Readout
    input_classes: Optional[int]


class TaskSource:
    """Everything a run needs to know about its data."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.corpus: Optional[CharCorpus] = None
        if cfg.task == TaskKind.CHARLM:
            self.corpus = corpus_mod.load_corpus(
                cfg.corpus_path,
                unit=cfg.unit,
                valid_fraction=cfg.valid_fraction,
                test_fraction=cfg.test_fraction,
                max_vocab=cfg.max_vocab,
                max_sentence_len=cfg.max_sentence_len,
            )
        self._valid: Optional[List[TaskBatch]] = None
        self._test: Optional[List[TaskBatch]] = None
        self._lm_batches_per_epoch: Optional[int] = None

    # -- shapes ---------------------------------------------------------------
    def model_shape(self) -> ModelShape:
        task = self.cfg.task
        if task == TaskKind.ADDING:
            return ModelShape(2, 1, Readout.FINAL, None)
        if task == TaskKind.COPYING:
            return ModelShape(INPUT_CLASSES, OUTPUT_CLASSES, Readout.PER_STEP, INPUT_CLASSES)
        vocab = self.corpus.vocab_size
        return ModelShape(vocab, vocab, Readout.PER_STEP, vocab)

    def threshold(self) -> float:
        """Memoryless baseline the run should beat."""
        if self.cfg.threshold is not None:
            return self.cfg.threshold
        if self.cfg.task == TaskKind.ADDING:
            return ADDING_BASELINE
        if self.cfg.task == TaskKind.COPYING:
            return copying_baseline(self.cfg.T, self.cfg.baseline_log_base)
        return CHARLM_THRESHOLD_FRACTION * float(np.log(self.corpus.vocab_size))

    # -- synthetic ------------------------------------------------------------
    def _synthetic(self, seed: int) -> TaskBatch:
        cfg = self.cfg
        if cfg.task == TaskKind.ADDING:
            return gen_adding(seed, cfg.batch_size, cfg.T).to_task_batch()
        return gen_copying(seed, cfg.batch_size, cfg.T).to_task_batch()

    # -- language model -------------------------------------------------------
    def lm_batches_per_epoch(self) -> int:
        if self._lm_batches_per_epoch is None:
            pairs = len(corpus_mod.make_pairs(self.corpus, "train", self.cfg.max_len))
            if pairs == 0:
                raise CorpusError("training split yields no prediction pairs")
            self._lm_batches_per_epoch = -(-pairs // self.cfg.batch_size)
        return self._lm_batches_per_epoch

    def epoch_of(self, iteration: int) -> int:
        """Epoch index of the update numbered ``iteration`` (1-based); 0 before training."""
        if iteration <= 0:
            return 0
        per_epoch = (
            self.lm_batches_per_epoch() if self.cfg.task == TaskKind.CHARLM else self.cfg.batches_per_epoch
        )
        return (iteration - 1) // per_epoch

    def iteration_budget(self) -> int:
        cfg = self.cfg
        if cfg.task == TaskKind.CHARLM and cfg.epochs is not None:
            return min(cfg.max_iterations, cfg.epochs * self.lm_batches_per_epoch())
        return cfg.iteration_budget

    def train_batches(self, start: int = 0) -> Iterator[TaskBatch]:
        """Batches for updates start+1, start+2, ... in order."""
        cfg = self.cfg
        if cfg.task != TaskKind.CHARLM:
            iteration = start
            while True:
                iteration += 1
                yield self._synthetic(derive_seed(cfg.seed, "train", iteration))
        per_epoch = self.lm_batches_per_epoch()
        epoch, skip = divmod(start, per_epoch)
        while True:
            stream = corpus_mod.batchify(
                self.corpus, cfg.batch_size, cfg.max_len, "train", seed=cfg.seed, epoch=epoch
            )
            for index, batch in enumerate(stream):
                if index >= skip:
                    yield batch
            skip = 0
            epoch += 1

    # -- held-out sets --------------------------------------------------------
    def _lm_split(self, split: str) -> List[TaskBatch]:
        cfg = self.cfg
        batches = list(
            corpus_mod.batchify(self.corpus, cfg.batch_size, cfg.max_len, split, shuffle=False)
        )
        if not batches:
            logger.warning(f"Corpus {split} split is empty; falling back to the training split")
            batches = list(
                corpus_mod.batchify(self.corpus, cfg.batch_size, cfg.max_len, "train", shuffle=False)
            )
        return batches

    def valid_set(self) -> List[TaskBatch]:
        if self._valid is None:
            if self.cfg.task == TaskKind.CHARLM:
                self._valid = self._lm_split("valid")
            else:
                self._valid = [
                    self._synthetic(derive_seed(self.cfg.seed, "valid", j))
                    for j in range(self.cfg.valid_batches)
                ]
        return self._valid

    def test_set(self) -> List[TaskBatch]:
        if self._test is None:
            if self.cfg.task == TaskKind.CHARLM:
                self._test = self._lm_split("test")
            else:
                self._test = [
                    self._synthetic(derive_seed(self.cfg.seed, "test", j))
                    for j in range(self.cfg.valid_batches)
                ]
        return self._test


__all__ = ["ModelShape", "TaskSource", "CHARLM_THRESHOLD_FRACTION"]
