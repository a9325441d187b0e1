"""
Seeded random streams

Each trial derives independent, named generators from one integer seed, so
adding draws to one stream never shifts another. Generators use the
counter-based Philox bit generator.
"""

import zlib

import numpy as np

SELECTION_SEED_OFFSET = 2 ** 31


def named_stream(seed: int, name: str) -> np.random.Generator:
    """Generator for ``name`` under ``seed``; the same pair always gives the same stream"""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    sequence = np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))])
    return np.random.Generator(np.random.Philox(sequence))


def environment_seed(base_seed: int, run: int) -> int:
    return base_seed + run


def selection_seed(base_seed: int, run: int) -> int:
    return base_seed + run + SELECTION_SEED_OFFSET
