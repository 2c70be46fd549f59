"""Seed derivation.

Every random draw in the package comes from a single user seed. Sub-streams
are derived by hashing ``(seed, *keys)`` through :class:`numpy.random.SeedSequence`,
so a trial or sweep cell can be regenerated in isolation from its keys alone.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_to_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK64
    if isinstance(key, float):
        return zlib.crc32(repr(key).encode())
    return zlib.crc32(str(key).encode())


def derive_seed(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(seed) & _MASK64, spawn_key=tuple(_key_to_int(k) for k in keys)
    )


def generator(seed: int, *keys) -> np.random.Generator:
    """Return an independent Philox-backed generator for ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(derive_seed(seed, *keys)))


def child_seed(seed: int, *keys) -> int:
    """A 64-bit integer seed for ``(seed, *keys)``, for APIs that take ints."""
    state = derive_seed(seed, *keys).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
