"""Deterministic block-parallel execution.

Work over n items is cut into fixed blocks of 64 regardless of the thread
count, workers touch disjoint state (their own rng streams and output
slots), and results are returned in block order.  Outputs are therefore
bitwise identical for any `threads` value; threads only change wall time.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

BLOCK = 64


def block_ranges(n_items):
    return [(a, min(a + BLOCK, n_items)) for a in range(0, n_items, BLOCK)]


def map_blocks(worker, n_items, threads=1):
    """Apply worker(start, stop) over fixed 64-item blocks, in order."""
    ranges = block_ranges(n_items)
    threads = 1 if threads is None else int(threads)
    if threads <= 1 or len(ranges) <= 1:
        return [worker(a, b) for a, b in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: worker(*ab), ranges))
