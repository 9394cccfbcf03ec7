"""Seed derivation and an order-preserving thread map."""

import os
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def default_threads() -> int:
    env = os.environ.get("BMK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def stream(seed: int, *key) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``; string keys are hashed."""
    spawn = tuple(k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in key)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=spawn)))


def derive_seed(seed: int, *key) -> int:
    return int(stream(seed, *key).integers(0, 2**63 - 1))


def ordered_map(fn, items, threads=None):
    """``[fn(x) for x in items]``, possibly on worker threads; order preserved."""
    items = list(items)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
