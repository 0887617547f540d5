"""Utility functions for seeding and parallel experiment runs."""

from __future__ import annotations

import multiprocessing
from collections.abc import Generator
from contextlib import contextmanager
from multiprocessing.pool import Pool

import numpy as np


def derive_seeds(seed: int, count: int) -> list[int]:
    """Independent child seeds for `count` runs, reproducible from one parent seed."""
    return [
        int(child.generate_state(1)[0])
        for child in np.random.SeedSequence(seed).spawn(count)
    ]


@contextmanager
def managed_pool(workers: int) -> Generator[Pool, None, None]:
    """Context manager to start a worker pool and always tear it down.

    Args:
        workers: Number of worker processes.

    Yields:
        The started pool. Results from Pool.map keep input order.
    """
    pool = multiprocessing.Pool(processes=workers)
    try:
        yield pool
        pool.close()
    except BaseException:
        pool.terminate()
        raise
    finally:
        pool.join()
