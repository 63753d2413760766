"""
Ordered parallel map over independent work items
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Apply ``func`` to every item, preserving input order

    Args:
        func: Pure function of one item
        items: Work items
        threads: Worker count; 1 runs inline

    Returns:
        Results in the order of ``items``
    """
    work = list(items)
    if threads <= 1 or len(work) <= 1:
        return [func(item) for item in work]

    logger.debug(f"Mapping {len(work)} items over {threads} threads")
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, work))
