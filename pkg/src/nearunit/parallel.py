"""Replication-parallel map over index ranges.

Work functions receive ``(*args, lo, hi)`` and must derive all randomness
from the unit indices in ``[lo, hi)``; the chunk boundaries and worker count
then have no effect on results.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

CHUNK = 250


def resolve_workers(workers: int | None) -> int:
    if workers is None or workers <= 0:
        return os.cpu_count() or 1
    return int(workers)


def run_chunks(fn, total: int, args: tuple, workers: int | None = 1, chunk: int = CHUNK) -> list:
    """Apply ``fn`` to consecutive index chunks and return results in index order."""
    bounds = [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]
    jobs = [args + b for b in bounds]
    workers = resolve_workers(workers)
    if workers == 1 or len(jobs) == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))
