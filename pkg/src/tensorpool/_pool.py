"""Bounded worker pool for embarrassingly parallel stages.

The pool size is read from the ``TENET_POOL_THREADS`` environment variable
(default 1: serial).  Items are independent and results keep input order,
so outputs are identical for every pool size.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "TENET_POOL_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        count = int(raw)
    except ValueError:
        return 1
    return max(1, count)


def parallel_map(fn, items):
    items = list(items)
    workers = worker_count()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
