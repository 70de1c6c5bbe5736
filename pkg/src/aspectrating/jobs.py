from __future__ import annotations
import logging
from multiprocessing import Pool
from typing import Any, Callable, Iterable, List, Optional, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def run_parallel(
    func: Callable[[T], R],
    tasks: Iterable[T],
    jobs: int = 1,
    initializer: Optional[Callable[..., None]] = None,
    initargs: Sequence[Any] = (),
) -> List[R]:
    """
    Map `func` over `tasks`, results in task order.
    jobs <= 1 runs inline in this process (the initializer still runs once).
    `func` and `initializer` must be module-level so worker processes can import them.
    """
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [func(t) for t in tasks]

    workers = min(int(jobs), len(tasks))
    logger.info("[jobs] %d tasks on %d worker processes", len(tasks), workers)
    with Pool(processes=workers, initializer=initializer, initargs=tuple(initargs)) as pool:
        return pool.map(func, tasks)
