"""Counter-based random stream management.

All randomness in the library flows from a single integer seed through named
substreams, so that independent trials are replayable and may run concurrently
without sharing generator state.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("substream keys must be non-negative")
        return int(key)
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"substream key must be int or str, got {type(key).__name__}")


def substream(seed: int, *keys) -> np.random.Generator:
    """Return an independent, replayable generator for (seed, keys).

    Distinct key tuples map to statistically independent streams; the same
    tuple always yields the same stream. String keys are hashed with crc32 so
    stream names are stable across runs and platforms.
    """
    spawn_key = tuple(_key_to_int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key))
