"""Shared-memory worker pool for cell-chunked operator evaluation.

Workers process disjoint contiguous cell ranges, so kernel writes never
collide.  In deterministic mode the chunk boundaries are fixed independently
of the worker count and every reduction is accumulated in chunk order, which
makes field outputs bitwise identical for any number of threads.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_DET_CHUNK = 256
_DOT_BLOCK = 1 << 14


class ParallelContext:
    """Owns the thread pool and the chunking/reduction policy."""

    def __init__(self, threads: int = 1, deterministic: bool = False):
        if threads < 1:
            raise ValueError("threads must be >= 1")
        self.threads = int(threads)
        self.deterministic = bool(deterministic)
        self._pool = ThreadPoolExecutor(max_workers=self.threads) if self.threads > 1 else None
        avail = os.cpu_count() or 1
        self.oversubscribed = self.threads > avail

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def chunks(self, n: int):
        if n <= 0:
            return []
        if self.deterministic:
            size = _DET_CHUNK
        else:
            size = max(1, -(-n // (4 * self.threads)))
        return [slice(i, min(i + size, n)) for i in range(0, n, size)]

    def run_chunked(self, kernel, n: int):
        """Run kernel(slice) over a partition of range(n), possibly threaded."""
        parts = self.chunks(n)
        if self._pool is None or len(parts) == 1:
            for sl in parts:
                kernel(sl)
            return
        list(self._pool.map(kernel, parts))

    def map_chunked(self, kernel, n: int):
        """Like run_chunked but collects per-chunk return values in order."""
        parts = self.chunks(n)
        if self._pool is None or len(parts) == 1:
            return [kernel(sl) for sl in parts]
        return list(self._pool.map(kernel, parts))

    def dot(self, x: np.ndarray, y: np.ndarray) -> float:
        """Inner product with a fixed-order blocked reduction when deterministic."""
        x = x.ravel()
        y = y.ravel()
        if not self.deterministic:
            return float(np.dot(x, y))
        total = 0.0
        for i in range(0, x.size, _DOT_BLOCK):
            total += float(np.dot(x[i : i + _DOT_BLOCK], y[i : i + _DOT_BLOCK]))
        return total

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(self.dot(x, x)))


SERIAL = ParallelContext(1, deterministic=False)
