"""Deterministic random-stream derivation.

Every randomized stage (splitting, sampling, SMOTE, grid search, ...) consumes
a named sub-stream of one master seed, so a single ``--seed`` reproduces a
whole pipeline bit-for-bit regardless of which stages run or in what order.
"""

from __future__ import annotations

import zlib

import numpy as np

_U32 = 0xFFFFFFFF


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8")) & _U32
    return int(part) & _U32


def seed_sequence(master_seed: int, *path) -> np.random.SeedSequence:
    """Seed sequence for the sub-stream named by ``path`` under ``master_seed``.

    Path elements may be strings (hashed with CRC-32, stable across platforms
    and processes) or integers. The same (seed, path) always yields the same
    stream; distinct paths yield statistically independent streams.
    """
    key = tuple(_key_part(p) for p in path)
    return np.random.SeedSequence(entropy=int(master_seed) & ((1 << 63) - 1), spawn_key=key)


def substream(master_seed: int, *path) -> np.random.Generator:
    """PCG64 generator for the named sub-stream."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, *path)))
