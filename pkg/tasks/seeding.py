"""Derived seeds so that batch content depends only on (run seed, position)."""
from __future__ import annotations

import zlib
from typing import Union

import numpy as np


def derive_seed(seed: int, *keys: Union[int, str]) -> int:
    words = [int(seed)]
    for key in keys:
        words.append(zlib.crc32(key.encode("utf-8")) if isinstance(key, str) else int(key))
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def rng_for(seed: int, *keys: Union[int, str]) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))
