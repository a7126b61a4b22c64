"""Chunked Monte Carlo sweeps with a deterministic reduction order.

Paths are processed in fixed-size chunks (the chunk size is part of the
algorithm, not a tuning knob), each chunk's partial results are produced by
its own path streams, and partials are combined in chunk order.  Thread
count therefore changes wall time only, never output bytes.
``LEVY_HJM_THREADS`` caps the pool.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK_SIZE = 4096


def thread_count(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("LEVY_HJM_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def chunk_ranges(n_paths: int, chunk_size: int = CHUNK_SIZE):
    return [(s, min(chunk_size, n_paths - s)) for s in range(0, n_paths, chunk_size)]


def sweep(per_chunk, n_paths: int, threads: int | None = None, chunk_size: int = CHUNK_SIZE):
    """Run ``per_chunk(first_index, count) -> dict[str, ndarray]`` over all paths.

    Returns the per-key concatenation in chunk order (per-path arrays line up
    with path indices 0..n_paths-1).
    """
    ranges = chunk_ranges(n_paths, chunk_size)
    workers = thread_count(threads)
    if workers == 1 or len(ranges) == 1:
        parts = [per_chunk(s, c) for s, c in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda rc: per_chunk(*rc), ranges))
    out = {}
    for key in parts[0]:
        vals = [p[key] for p in parts]
        out[key] = np.concatenate([np.atleast_1d(v) for v in vals])
    return out
