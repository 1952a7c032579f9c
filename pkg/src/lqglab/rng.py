"""Deterministic random streams.

Every task gets its own generator derived from ``(master_seed, task_index)``
so results do not depend on how tasks are distributed over workers.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def task_rng(seed: int, *index: int) -> np.random.Generator:
    """Generator for the task identified by ``index`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed) & MASK64, spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.PCG64(ss))


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return task_rng(seed)


def child_seed(seed: int, *index: int) -> int:
    """A 63-bit integer seed for a sub-task, usable where an int is required."""
    ss = np.random.SeedSequence(int(seed) & MASK64, spawn_key=tuple(int(i) for i in index))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def chunk_sizes(n: int, chunk: int) -> list[int]:
    """Split ``n`` into fixed-size chunks; the split depends only on ``n`` and ``chunk``."""
    if n <= 0:
        return []
    full, rest = divmod(int(n), int(chunk))
    return [chunk] * full + ([rest] if rest else [])
