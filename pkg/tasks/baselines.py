"""Memoryless baselines used as convergence thresholds."""
from __future__ import annotations

import math

# E[(1 - (U1 + U2))^2] = Var(U1 + U2) = 1/6, reported to three places
ADDING_BASELINE = 0.167
ADDING_BASELINE_EXACT = 1.0 / 6.0

COPY_MEMORY = 10
COPY_ALPHABET = 8


def copying_baseline(T: int, base: str = "e") -> float:
    """Cost of emitting C8 until the recall window, then guessing uniformly among C0..C7."""
    log = math.log2 if base == "2" else math.log
    return COPY_MEMORY * log(COPY_ALPHABET) / (T + 2 * COPY_MEMORY)


def uniform_nll(vocab_size: int) -> float:
    return math.log(vocab_size)
