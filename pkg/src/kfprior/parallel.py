"""Deterministic thread-pool helper.

Worker count comes from the KFP_THREADS environment variable (default 1,
serial).  Results are always returned in input order, so any reduction over
them is independent of scheduling; with pure item functions the output is
bit-identical at every thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

from .errors import DomainError

__all__ = ["parallel_map", "thread_count"]

_T = TypeVar("_T")
_R = TypeVar("_R")


def thread_count() -> int:
    raw = os.environ.get("KFP_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"KFP_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise DomainError(f"KFP_THREADS must be a positive integer, got {raw!r}")
    return n


def parallel_map(fn: Callable[[_T], _R], items: Iterable[_T]) -> list[_R]:
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
