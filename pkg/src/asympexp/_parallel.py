"""Ordered thread-pool map used for per-piece work."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
U = TypeVar("U")

THREADS_ENV = "ASYMPEXP_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        threads = int(raw) if raw else 1
    if threads < 1:
        raise ValueError(f"thread count must be positive, got {threads}")
    return threads


def pmap(fn: Callable[[T], U], items: Iterable[T], threads: int | None = None) -> list[U]:
    """``[fn(x) for x in items]``, possibly on worker threads; order is preserved."""
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
