"""Shared runtime helpers: thread budget, ordered parallel map, seeded RNGs."""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def thread_count():
    """Worker budget from POHMM_THREADS (unset/1 = serial, 0 = all cores)."""
    raw = os.environ.get("POHMM_THREADS", "1").strip()
    try:
        n = int(raw)
    except ValueError:
        return 1
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


def parallel_map(fn, items):
    """Map preserving input order; threads only when POHMM_THREADS allows.

    Results are reduced in input order regardless of scheduling, so output
    is deterministic as long as each item's work is.
    """
    items = list(items)
    workers = thread_count()
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def master_rng(seed):
    """Counter-based generator for a 64-bit seed; supports spawning."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def substream(seed, index):
    """Independent stream for task ``index`` derived from one seed."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))
