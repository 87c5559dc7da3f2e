"""Order-preserving worker pool capped by ``ODL_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    raw = os.environ.get("ODL_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"ODL_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """``list(map(fn, items))``; results are always in input order."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
