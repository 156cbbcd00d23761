"""Ordered parallel map over independent replicate tasks.

Dense linear algebra releases the GIL, so a thread pool is enough.  Results
come back in input order whatever the completion order, which keeps every
downstream reduction reproducible.  The worker count can be overridden by
the ``PERTURBGP_THREADS`` environment variable.
"""

from concurrent.futures import ThreadPoolExecutor
import os

__all__ = ["THREADS_ENV", "resolve_threads", "map_ordered"]

THREADS_ENV = "PERTURBGP_THREADS"


def resolve_threads(n_jobs=None):
    """Worker count: the environment override wins, then ``n_jobs``, then 1."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if value < 1:
            raise ValueError(f"{THREADS_ENV} must be positive, got {value}")
        return value
    return max(1, int(n_jobs or 1))


def map_ordered(fn, items, n_jobs=1):
    """``[fn(x) for x in items]``, optionally on a thread pool."""
    items = list(items)
    workers = min(resolve_threads(n_jobs), max(len(items), 1))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
