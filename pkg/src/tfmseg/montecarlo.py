"""Replication runner: one RNG stream per replication, results in replication order."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from collections.abc import Callable, Iterable

from ._accel import worker_count


def run_replications(fn: Callable, items: Iterable, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, fanned out over processes when allowed.

    ``workers`` defaults to ``TFMSEG_THREADS``.  Output order always follows
    ``items`` so aggregated results do not depend on scheduling.
    """
    items = list(items)
    n = worker_count() if workers is None else max(1, int(workers))
    n = min(n, len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items, chunksize=1))
