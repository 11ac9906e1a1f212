"""Thread-count setting and a chunked map with deterministic results.

Work is always split into fixed-size chunks that do not depend on the
thread count, so every chunk performs identical floating-point work
whether it runs on one thread or many.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")

CHUNK_SIZE = 512

_threads = max(1, int(os.environ.get("DMPMESH_THREADS", "1") or 1))


def set_threads(n: int) -> None:
    """Set the number of worker threads used by chunked computations."""
    global _threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def get_threads() -> int:
    return _threads


def chunk_bounds(n: int, chunk: int = CHUNK_SIZE) -> list[tuple[int, int]]:
    """Split ``range(n)`` into consecutive ``(start, stop)`` pairs."""
    return [(s, min(s + chunk, n)) for s in range(0, n, chunk)]


def chunked_map(func: Callable[[int, int], T], n: int, chunk: int = CHUNK_SIZE,
                threads: int | None = None) -> list[T]:
    """Apply ``func(start, stop)`` to each chunk of ``range(n)``, in order."""
    bounds = chunk_bounds(n, chunk)
    nthreads = _threads if threads is None else threads
    if nthreads <= 1 or len(bounds) <= 1:
        return [func(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=nthreads) as pool:
        return list(pool.map(lambda ab: func(*ab), bounds))
