"""Deterministic fan-out for sampled estimators.

Work is always split into the same fixed chunks with seeds spawned from the
caller's seed, so the thread count (``AFM_THREADS``) changes wall time only.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def worker_count() -> int:
    try:
        n = int(os.environ.get("AFM_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def pmap(fn, items):
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def child_rngs(seed, count):
    seqs = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(s) for s in seqs]
