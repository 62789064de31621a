"""Deterministic RNG substreams keyed by (seed, tag).

Every stochastic routine draws from its own named stream so that parallel
and serial executions, and re-runs with the same scenario seed, produce
identical results.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, tag: str) -> np.random.Generator:
    """Independent generator for a named sub-task of a seeded run."""
    key = zlib.crc32(tag.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFF, spawn_key=(key,)))
