"""Seed plumbing: one root seed, deterministic per-stage streams."""
from __future__ import annotations

import zlib

import numpy as np


def derive_seed(root: int, stage: str) -> int:
    """Stable 63-bit seed for ``stage`` derived from ``root``."""
    ss = np.random.SeedSequence(int(root), spawn_key=(zlib.crc32(stage.encode()),))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator, reproducible across platforms."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(int(seed)))
