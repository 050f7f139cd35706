"""Thread fan-out with results returned in submission order."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

_DEFAULT_THREADS = 1


def set_default_threads(n: int) -> None:
    global _DEFAULT_THREADS
    if int(n) < 1:
        raise ValueError("thread count must be at least 1")
    _DEFAULT_THREADS = int(n)


def default_threads() -> int:
    return _DEFAULT_THREADS


def ordered_map(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]``, possibly evaluated on worker threads.

    Work is split into the same items regardless of the thread count and
    the caller reduces the returned list in order, so results do not
    depend on ``threads``.
    """
    items = list(items)
    threads = default_threads() if threads is None else int(threads)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def ordered_sum(parts):
    """Left-to-right sum of a list of arrays."""
    total = None
    for p in parts:
        total = p if total is None else total + p
    return total


def ordered_reduce(fn, items, threads: int | None = None, groups: int = 8):
    """Sum of ``fn(x)`` over ``items`` with a fixed association order.

    Items are split into ``groups`` contiguous runs that are summed one
    item at a time, possibly on worker threads; the run totals are then
    added left to right.  Memory stays bounded by the number of runs and
    the result does not depend on ``threads``.
    """
    items = list(items)
    size = max(1, -(-len(items) // groups))
    runs = [items[i:i + size] for i in range(0, len(items), size)]

    def run_sum(run):
        total = None
        for x in run:
            v = fn(x)
            total = v if total is None else _add(total, v)
        return total

    parts = ordered_map(run_sum, runs, threads)
    total = None
    for p in parts:
        total = p if total is None else _add(total, p)
    return total


def _add(a, b):
    if isinstance(a, (list, tuple)):
        return type(a)(_add(x, y) for x, y in zip(a, b))
    return a + b
