"""
Sentence-per-line corpus pipeline for next-token language modelling.

Each non-empty line is one sentence. A sentence of k+1 tokens yields the
prediction pair (tokens[0..k-1] -> tokens[1..k]); sentences longer than
max_len+1 tokens are cut into consecutive windows.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import BUNDLED_CORPUS
from core.errors import ContractError, CorpusError
from tasks.batch import TaskBatch
from tasks.seeding import rng_for

logger = logging.getLogger(__name__)

UNK = "<unk>"
UNK_ID = 0
SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class CharCorpus:
    """Vocabulary plus train/valid/test id streams with sentence start offsets."""

    vocab: Tuple[str, ...]
    unit: str
    ids: Dict[str, np.ndarray]
    offsets: Dict[str, np.ndarray]
    index: Dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not self.index:
            object.__setattr__(self, "index", {tok: i for i, tok in enumerate(self.vocab)})

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def tokenize(self, text: str) -> List[str]:
        return text.split() if self.unit == "word" else list(text)

    def encode(self, text: str) -> np.ndarray:
        """Map text to ids; tokens outside the vocabulary become UNK_ID."""
        return np.array([self.index.get(tok, UNK_ID) for tok in self.tokenize(text)], dtype=np.int64)

    def decode(self, ids: Sequence[int]) -> str:
        sep = " " if self.unit == "word" else ""
        return sep.join(self.vocab[int(i)] for i in ids)

    def sentences(self, split: str) -> List[np.ndarray]:
        if split not in SPLITS:
            raise ContractError(f"unknown split {split!r}; expected one of {SPLITS}")
        stream, starts = self.ids[split], self.offsets[split]
        bounds = list(starts) + [len(stream)]
        return [stream[bounds[i]:bounds[i + 1]] for i in range(len(starts))]


def _read_lines(path: Path) -> List[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        logger.error(f"Error reading corpus {path}: {str(e)}")
        raise CorpusError(f"cannot read corpus {path}: {e}") from e
    lines = [line.rstrip("\r") for line in text.split("\n")]
    return [line for line in lines if line.strip()]


def _build_vocab(token_lines: List[List[str]], max_vocab: Optional[int]) -> Tuple[str, ...]:
    counts = Counter(tok for line in token_lines for tok in line)
    counts.pop(UNK, None)
    if max_vocab is not None and len(counts) > max_vocab - 1:
        kept = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: max_vocab - 1]
        tokens = sorted(tok for tok, _ in kept)
    else:
        tokens = sorted(counts)
    return (UNK,) + tuple(tokens)


def load_corpus(
    path: "str | Path" = BUNDLED_CORPUS,
    unit: str = "char",
    valid_fraction: float = 0.1,
    test_fraction: float = 0.1,
    max_vocab: Optional[int] = None,
    max_sentence_len: Optional[int] = None,
) -> CharCorpus:
    """Read a UTF-8 sentence-per-line file and split it by line.

    The last ``test_fraction`` of lines form the test split and the lines before
    them the validation split; the vocabulary covers the whole file.
    """
    if unit not in ("char", "word"):
        raise ContractError(f"unit must be 'char' or 'word', got {unit!r}")
    lines = _read_lines(Path(path))
    if not lines:
        raise CorpusError(f"corpus {path} contains no text")

    tokenized = [line.split() if unit == "word" else list(line) for line in lines]
    if max_sentence_len is not None:
        tokenized = [toks for toks in tokenized if len(toks) <= max_sentence_len]
        if not tokenized:
            raise CorpusError(f"no sentence in {path} has at most {max_sentence_len} tokens")
    vocab = _build_vocab(tokenized, max_vocab)
    index = {tok: i for i, tok in enumerate(vocab)}

    n = len(tokenized)
    n_test = int(n * test_fraction)
    n_valid = int(n * valid_fraction)
    if n_test + n_valid >= n:
        n_test = n_valid = 0
    cut_valid = n - n_test - n_valid
    cut_test = n - n_test
    parts = {
        "train": tokenized[:cut_valid],
        "valid": tokenized[cut_valid:cut_test],
        "test": tokenized[cut_test:],
    }

    ids: Dict[str, np.ndarray] = {}
    offsets: Dict[str, np.ndarray] = {}
    for split, sents in parts.items():
        lengths = [len(s) for s in sents]
        offsets[split] = np.cumsum([0] + lengths[:-1]).astype(np.int64) if sents else np.zeros(0, dtype=np.int64)
        flat = [index.get(tok, UNK_ID) for s in sents for tok in s]
        ids[split] = np.array(flat, dtype=np.int64)

    logger.info(
        f"Loaded corpus {path}: {len(vocab)} {unit} types, "
        f"{len(parts['train'])}/{len(parts['valid'])}/{len(parts['test'])} sentences"
    )
    return CharCorpus(vocab=vocab, unit=unit, ids=ids, offsets=offsets, index=index)


@dataclass(frozen=True)
class LMPair:
    inputs: np.ndarray
    targets: np.ndarray
    sentence_length: int


def make_pairs(corpus: CharCorpus, split: str, max_len: int) -> List[LMPair]:
    if max_len < 1:
        raise ContractError(f"max_len must be >= 1, got {max_len}")
    pairs: List[LMPair] = []
    for sent in corpus.sentences(split):
        for start in range(0, max(len(sent) - 1, 0), max_len):
            chunk = sent[start:start + max_len + 1]
            if len(chunk) < 2:
                continue
            pairs.append(LMPair(chunk[:-1], chunk[1:], len(sent)))
    return pairs


def pad_pairs(pairs: Sequence[LMPair]) -> TaskBatch:
    width = max(len(p.inputs) for p in pairs)
    inputs = np.full((len(pairs), width), UNK_ID, dtype=np.int64)
    targets = np.full((len(pairs), width), UNK_ID, dtype=np.int64)
    mask = np.zeros((len(pairs), width))
    for row, pair in enumerate(pairs):
        k = len(pair.inputs)
        inputs[row, :k] = pair.inputs
        targets[row, :k] = pair.targets
        mask[row, :k] = 1.0
    lengths = np.array([p.sentence_length for p in pairs], dtype=np.int64)
    return TaskBatch(inputs, targets, mask, lengths)


def batchify(
    corpus: CharCorpus,
    batch: int,
    max_len: int,
    split: str = "train",
    seed: int = 0,
    epoch: int = 0,
    shuffle: bool = True,
) -> Iterator[TaskBatch]:
    """Padded batches over one pass of a split; order depends only on (seed, epoch)."""
    if batch < 1:
        raise ContractError(f"batch must be >= 1, got {batch}")
    if max_len < 2:
        raise ContractError(f"max_len must be >= 2, got {max_len}")
    pairs = make_pairs(corpus, split, max_len)
    order = np.arange(len(pairs))
    if shuffle:
        order = rng_for(seed, "charlm", epoch).permutation(len(pairs))
    for start in range(0, len(order), batch):
        yield pad_pairs([pairs[i] for i in order[start:start + batch]])


def parse_buckets(spec: str) -> List[Tuple[int, Optional[int]]]:
    """Parse ``"1-50,51-100,101-"`` into inclusive (lo, hi) ranges; hi None is open."""
    buckets: List[Tuple[int, Optional[int]]] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        lo_text, sep, hi_text = part.partition("-")
        try:
            lo = int(lo_text)
            hi = int(hi_text) if hi_text.strip() else None
        except ValueError:
            raise ContractError(f"bad length bucket {part!r}") from None
        if not sep or lo < 1 or (hi is not None and hi < lo):
            raise ContractError(f"bad length bucket {part!r}")
        buckets.append((lo, hi))
    return buckets


def bucket_label(bucket: Tuple[int, Optional[int]]) -> str:
    lo, hi = bucket
    return f"{lo}-{hi}" if hi is not None else f"{lo}+"
