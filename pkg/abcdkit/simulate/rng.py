"""Seedable random substreams.

Every stream is a pure function of the master seed and a tuple of keys, so replicates can be
generated in any order and on any number of workers with identical results.
"""

from typing import Union

import numpy as np

_FNV_OFFSET64 = 0xCBF29CE484222325
_FNV_PRIME64 = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

Key = Union[int, str]


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET64
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME64) & _MASK64
    return h


def stable_key(part: Key) -> int:
    """Non-negative 64-bit integer for a key; strings hash with FNV-1a (``hash()`` is salted)."""
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    return _fnv1a64(str(part).encode("utf-8"))


def substream(seed: int, *keys: Key) -> np.random.Generator:
    """Independent generator for ``keys`` under the master ``seed``."""
    sequence = np.random.SeedSequence(
        entropy=int(seed) & _MASK64, spawn_key=tuple(stable_key(k) for k in keys)
    )
    return np.random.default_rng(sequence)
