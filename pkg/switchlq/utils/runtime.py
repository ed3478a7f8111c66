import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

THREADS_ENV = "SLQ_THREADS"

# substream indices under a path's seed
STREAM_CHAIN = 0
STREAM_BROWNIAN = 1
STREAM_BRIDGE = 2
STREAM_INDEPENDENT = 3

T = TypeVar("T")
R = TypeVar("R")


def thread_cap() -> int:
    """Worker count allowed for internal parallelism (``SLQ_THREADS``, default cpu count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return max(1, os.cpu_count() or 1)
    try:
        value = int(raw)
    except ValueError:
        logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
        return max(1, os.cpu_count() or 1)
    return max(1, value)


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Map ``fn`` over ``items`` with at most :func:`thread_cap` workers.

    Results come back in input order, so any reduction over them is
    independent of scheduling.
    """
    items = list(items)
    workers = min(thread_cap(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def derive_seed(base_seed: int, path: int, stream: int = STREAM_CHAIN) -> np.random.SeedSequence:
    """Seed of substream ``stream`` of path ``path``.

    Splitting is ``SeedSequence(base_seed, spawn_key=(path, stream))``: path
    ``k`` is reproducible regardless of how many paths are drawn, and the
    chain and Brownian streams of a path are independent.
    """
    return np.random.SeedSequence(int(base_seed), spawn_key=(int(path), int(stream)))


def make_rng(seed) -> np.random.Generator:
    """Generator from an integer seed or a ``SeedSequence``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(int(seed)))
