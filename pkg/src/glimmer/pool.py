"""Bounded worker pool with deterministic, index-ordered result collection."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

THREADS_ENV = "GLIMMER_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """Pool size from the GLIMMER_THREADS env var; defaults to 1 (serial)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def indexed_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Apply ``fn`` to every item, results in input order.

    Runs serially unless GLIMMER_THREADS > 1. ``fn`` must be pure for the
    output to be independent of scheduling.
    """
    workers = worker_count()
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]
