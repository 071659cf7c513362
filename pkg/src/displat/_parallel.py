"""Worker-pool helper honoring the ``DISPLAT_THREADS`` cap."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    cap = os.environ.get("DISPLAT_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, min(n, int(cap)))
        except ValueError:
            pass
    return n


def pmap(fn, items):
    """Ordered map over ``items``, threaded when more than one worker is allowed.

    The numpy kernels used by callers release the GIL, and results are always
    returned in input order, so output does not depend on the worker count.
    """
    items = list(items)
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
