"""Deterministic task fan-out.

Results come back in task order whatever the worker count, and BLAS is held
to one thread inside every task so floating-point reductions do not depend on
the thread pool either.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

from threadpoolctl import threadpool_limits


def _run_chunk(fn, chunk):
    with threadpool_limits(limits=1):
        return [fn(task) for task in chunk]


def _chunks(tasks, size):
    return [tasks[i : i + size] for i in range(0, len(tasks), size)]


def ordered_map(fn, tasks, workers=1, chunk_size=None):
    """``[fn(t) for t in tasks]``, optionally spread over worker processes.

    ``fn`` must be picklable (a module-level function or ``functools.partial``)
    when ``workers > 1``.
    """
    tasks = list(tasks)
    workers = max(1, int(workers))
    if workers == 1 or len(tasks) <= 1:
        return _run_chunk(fn, tasks)
    size = chunk_size or max(1, -(-len(tasks) // (4 * workers)))
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, fn, c) for c in _chunks(tasks, size)]
        for f in futures:
            out.extend(f.result())
    return out
