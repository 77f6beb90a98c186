"""Replication-level parallelism with results independent of the worker count."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

# stream tags keep critical-value and power simulations on disjoint seeds
STREAM_CRITVAL = 1
STREAM_POWER = 2


def rep_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for one replication, determined by ``(seed, key)`` only."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def map_reps(fn, n_reps: int, workers: int = 1, chunk: int = 64) -> list:
    """``[fn(r) for r in range(n_reps)]``, possibly computed on a thread pool.

    Each ``fn(r)`` must depend only on ``r``; order is preserved.
    """
    if workers <= 1 or n_reps <= chunk:
        return [fn(r) for r in range(n_reps)]

    def run(start):
        return [fn(r) for r in range(start, min(start + chunk, n_reps))]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        blocks = list(pool.map(run, range(0, n_reps, chunk)))
    return [item for block in blocks for item in block]
