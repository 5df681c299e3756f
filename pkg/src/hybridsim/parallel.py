"""Thread-count resolution and ordered chunked execution."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")

ENV_THREADS = "HYBRIDSIM_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: the environment variable wins, then the argument, then all cores."""
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"{ENV_THREADS} must be an integer, got {env!r}") from None
        return max(1, value)
    if threads:
        return max(1, int(threads))
    return os.cpu_count() or 1


def chunk_bounds(n: int, chunk: int) -> list[tuple[int, int]]:
    return [(a, min(a + chunk, n)) for a in range(0, n, chunk)]


def map_chunks(
    fn: Callable[[int, int], T], n: int, chunk: int, threads: int | None = None
) -> list[T]:
    """Apply ``fn(start, stop)`` over ``[0, n)`` in chunks; results keep chunk order.

    numpy releases the GIL in its array kernels, so threads give real overlap
    for the vectorized ensemble code.
    """
    bounds = chunk_bounds(n, chunk)
    workers = min(resolve_threads(threads), len(bounds)) if bounds else 1
    if workers <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))
