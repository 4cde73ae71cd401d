"""Deterministic seed derivation.

Every random draw in the package comes from a generator keyed by a base seed
plus a tuple of integer or string tags (day index, purpose, resample index).
Keys are mixed through :class:`numpy.random.SeedSequence`, so streams with
different keys are statistically independent and adding a new consumer never
shifts the draws of an existing one.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key_int(key: int | str) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    k = int(key)
    if k < 0:
        raise ValueError(f"substream keys must be non-negative, got {k}")
    return k


def _sequence(seed: int, keys: tuple) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=tuple(_key_int(k) for k in keys),
    )


def substream(seed: int, *keys: int | str) -> np.random.Generator:
    """Return a PCG64 generator for ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(_sequence(seed, keys)))


def derive_seed(seed: int, *keys: int | str) -> int:
    """Return a 64-bit integer seed derived from ``(seed, *keys)``."""
    word = _sequence(seed, keys).generate_state(1, dtype=np.uint64)[0]
    return int(word)
