"""Running independent work items on threads."""
from __future__ import annotations

import asyncio
import threading
import time

import pytest

from pbmin import tasks
from pbmin.tasks import map_ordered, thread_limit


def test_explicit_thread_limit(monkeypatch):
    """An explicit count beats the environment."""
    monkeypatch.setenv(tasks.ENV_THREADS, '7')
    assert thread_limit(2) == 2
    assert thread_limit() == 7


def test_default_thread_limit(monkeypatch):
    """Without any setting the CPU count is used."""
    monkeypatch.delenv(tasks.ENV_THREADS, raising=False)
    monkeypatch.setattr(tasks.os, 'cpu_count', lambda: 5)
    assert thread_limit() == 5
    monkeypatch.setattr(tasks.os, 'cpu_count', lambda: None)
    assert thread_limit() == 1


@pytest.mark.parametrize('env, message', [
    ('many', 'must be an integer'),
    ('0', 'at least 1'),
    ('-3', 'at least 1'),
])
def test_bad_thread_limit(monkeypatch, env, message):
    """Invalid settings are reported."""
    monkeypatch.setenv(tasks.ENV_THREADS, env)
    with pytest.raises(ValueError, match=message):
        thread_limit()


def test_results_keep_item_order():
    """Later items may finish first without reordering results."""

    def slow_square(x: int) -> int:
        time.sleep(0.002 * (10 - x))
        return x * x

    expect = [x * x for x in range(10)]
    assert map_ordered(slow_square, range(10), threads=4) == expect
    assert map_ordered(slow_square, range(10), threads=1) == expect
    assert map_ordered(slow_square, [], threads=4) == []


def test_threads_are_limited():
    """No more than the permitted number of items run at once."""
    lock = threading.Lock()
    active = peak = 0

    def work(_item) -> None:
        nonlocal active, peak
        with lock:
            active += 1
            peak = max(peak, active)
        time.sleep(0.01)
        with lock:
            active -= 1

    map_ordered(work, range(12), threads=3)
    assert 1 <= peak <= 3


def test_failures_are_raised():
    """A failing item's exception reaches the caller."""

    def fail_on_three(x: int) -> int:
        if x == 3:
            raise ZeroDivisionError('three')
        return x

    with pytest.raises(ZeroDivisionError, match='three'):
        map_ordered(fail_on_three, range(6), threads=2)
    with pytest.raises(ZeroDivisionError):
        map_ordered(fail_on_three, range(6), threads=1)


def test_called_from_a_running_loop():
    """Work started from inside a coroutine still completes in order."""

    async def outer() -> list[int]:
        return map_ordered(lambda x: x * x, range(8), threads=3)

    assert asyncio.run(outer()) == [x * x for x in range(8)]
