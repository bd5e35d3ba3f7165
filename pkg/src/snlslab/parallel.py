"""Counter-based random streams and ordered replica parallelism.

Every Monte Carlo replica gets its own Philox generator keyed by
(master seed, stream name, replica index).  Replica results are collected in
index order, so the output never depends on the worker count.
"""
from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

THREADS_ENV = "SNLSLAB_THREADS"

T = TypeVar("T")


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def stream_rng(master_seed: int, stream: str, replica: int = 0) -> np.random.Generator:
    """Independent Philox stream for ``(master_seed, stream, replica)``."""
    tag = zlib.crc32(stream.encode())
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(tag, int(replica)))
    return np.random.Generator(np.random.Philox(seq))


def replica_map(fn: Callable[[int], T], n: int, threads: int | None = None) -> list[T]:
    """``[fn(0), ..., fn(n-1)]`` evaluated on a thread pool, returned in index order."""
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def rng_state(rng: np.random.Generator) -> dict:
    """JSON-safe snapshot of a generator's bit-generator state."""
    return _jsonable(rng.bit_generator.state)


def rng_from_state(state: dict) -> np.random.Generator:
    bitgen = getattr(np.random, state["bit_generator"])()
    restored = _restore(state)
    bitgen.state = restored
    return np.random.Generator(bitgen)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__array__": [int(x) for x in obj.ravel()], "dtype": str(obj.dtype)}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _restore(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.array(obj["__array__"], dtype=obj["dtype"])
        return {k: _restore(v) for k, v in obj.items()}
    return obj
