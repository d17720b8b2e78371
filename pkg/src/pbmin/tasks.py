"""Higher level management of independent work items.

Work runs as asyncio tasks that hand each item to a worker thread. Results
are always assembled in item order, so the outcome never depends on the
number of threads or on scheduling.
"""
from __future__ import annotations

import asyncio
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

log = logging.getLogger(__name__)

ENV_THREADS = 'PBMIN_THREADS'

ITEM = TypeVar('ITEM')
RESULT = TypeVar('RESULT')


def thread_limit(threads: int | None = None) -> int:
    """Work out how many worker threads may be used.

    An explicit value wins, then the PBMIN_THREADS environment variable, then
    the CPU count.
    """
    if threads is None:
        env = os.environ.get(ENV_THREADS, '').strip()
        if env:
            try:
                threads = int(env)
            except ValueError:
                msg = f'{ENV_THREADS} must be an integer, not {env!r}'
                raise ValueError(msg) from None
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        msg = f'The thread count must be at least 1, not {threads}'
        raise ValueError(msg)
    return threads


async def _gather(
        func: Callable[[ITEM], RESULT],
        items: list[ITEM],
        limit: int,
    ) -> list[RESULT]:
    gate = asyncio.Semaphore(limit)

    async def run(item: ITEM) -> RESULT:
        async with gate:
            return await asyncio.to_thread(func, item)

    tasks = [
        asyncio.create_task(run(item), name=f'work-{i}')
        for i, item in enumerate(items)]
    try:
        return list(await asyncio.gather(*tasks))
    except BaseException:
        for task in tasks:
            task.cancel()
        raise


def map_ordered(
        func: Callable[[ITEM], RESULT],
        items: Iterable[ITEM],
        *,
        threads: int | None = None,
    ) -> list[RESULT]:
    """Apply func to every item, possibly in parallel, keeping item order.

    The first failure of any item is re-raised. This may be called from
    within a running event loop, in which case the work is driven by a
    separate event loop on a helper thread and the caller is blocked until
    it completes.
    """
    items = list(items)
    limit = min(thread_limit(threads), max(1, len(items)))
    if limit == 1:
        return [func(item) for item in items]
    log.debug('Running %d items on up to %d threads', len(items), limit)
    try:
        asyncio.get_running_loop()
    except RuntimeError:
        return asyncio.run(_gather(func, items, limit))
    with ThreadPoolExecutor(max_workers=1) as pool:
        return pool.submit(asyncio.run, _gather(func, items, limit)).result()
