import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "AUDIT_THREADS"


def thread_count(threads=None):
    """Worker count: explicit value, else ``$AUDIT_THREADS``, else 1."""
    if threads is None:
        raw = os.environ.get(ENV_THREADS, "").strip()
        threads = int(raw) if raw else 1
    return max(1, int(threads))


def pmap(fn, items, threads=None):
    """Ordered map over ``items``; results never depend on the worker count."""
    items = list(items)
    workers = min(thread_count(threads), len(items)) if items else 1
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
