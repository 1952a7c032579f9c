"""Order-preserving parallel map over independent tasks."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "LQGLAB_WORKERS"


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return 1


def pmap(fn: Callable[[T], R], tasks: Iterable[T], workers: int | None = None) -> list[R]:
    """Apply ``fn`` to every task and return results in task order.

    Tasks carry their own seeds, so the output is identical for any ``workers``.
    """
    tasks: Sequence[T] = list(tasks)
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        return list(ex.map(fn, tasks))
