"""Worker-pool sizing for the data-parallel kernels.

Kernels parallelize over disjoint output regions, so results are bitwise
independent of the worker count; this module only controls how many threads
the pool uses. The count can be overridden with the WINCONV_WORKERS
environment variable or programmatically via set_workers / worker_count.

Must be imported before numba so the pool's launch-time maximum can be
raised above the physical core count (needed to exercise multi-worker
determinism on small machines).
"""

from __future__ import annotations

import contextlib
import os

ENV_WORKERS = "WINCONV_WORKERS"

# numba fixes its maximum thread count at first import; make sure we can
# schedule at least 4 workers even on single-core machines.
_launch_max = max(4, os.cpu_count() or 1)
os.environ.setdefault("NUMBA_NUM_THREADS", str(_launch_max))

import numba  # noqa: E402  (env var above must be set first)


def max_workers() -> int:
    return numba.config.NUMBA_NUM_THREADS


def set_workers(count: int) -> int:
    """Set the pool size, clamped to [1, max_workers()]. Returns the value used."""
    clamped = min(max(1, int(count)), max_workers())
    numba.set_num_threads(clamped)
    return clamped


def active_workers() -> int:
    return numba.get_num_threads()


@contextlib.contextmanager
def worker_count(count: int):
    """Temporarily run with a given pool size."""
    previous = active_workers()
    set_workers(count)
    try:
        yield active_workers()
    finally:
        set_workers(previous)


def _init_from_env() -> None:
    raw = os.environ.get(ENV_WORKERS)
    if not raw:
        return
    try:
        requested = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_WORKERS} must be an integer, got {raw!r}") from None
    set_workers(requested)


_init_from_env()
