"""Keyed random streams.

Every stream is a Philox generator (counter-based) seeded from a
``SeedSequence`` whose spawn key names the purpose of the stream, so draws for
different keys never depend on the order in which they are requested.
"""
from __future__ import annotations

import numpy as np

SAMPLE = 0
SUBSAMPLE = 1
TRIAL = 2
INSTANCE = 3


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """A 64-bit child seed determined by ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
