"""Hierarchical seed derivation.

Every random stream in a campaign is addressed by ``(master_seed, *path)``
so results do not depend on evaluation order or worker count.
"""
from __future__ import annotations

import numpy as np


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for the stream at ``path`` under ``seed``.

    ``derive_rng(s)`` is the root stream; ``derive_rng(s, k)`` is the k-th
    child, identical to ``SeedSequence(s).spawn(k + 1)[k]``.
    """
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path)))


def derive_seed(seed: int, *path: int) -> int:
    """A 63-bit integer seed for the stream at ``path``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1
