"""Small shared helpers."""

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigurationError


def worker_count():
    """Worker-thread cap, from the QDS_THREADS environment variable.

    Defaults to 1 (serial). Results never depend on the value: parallel maps
    preserve input order and reductions run in a fixed order.
    """
    raw = os.environ.get("QDS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError("QDS_THREADS must be an integer, got %r" % raw)
    if n < 1:
        raise ConfigurationError("QDS_THREADS must be >= 1, got %d" % n)
    return n


def parallel_map(fn, items):
    """Ordered map over items, threaded when QDS_THREADS allows it."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
