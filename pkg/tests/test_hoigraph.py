"""Test profiler and timer."""

import time

from hoigraph import Timer
from hoigraph import profile as profiler


def test_timer():
    """Should work as expected."""
    with Timer() as t:
        time.sleep(0.01)
    assert t.elapsed >= 0.01


def test_profiler():
    """Should return the stage timing next to the result."""

    @profiler(stage="sum", quiet=True, add_to_return=True)
    def _sum(a, b):
        return a + b

    value, stats = _sum(1, 2)
    assert value == 3
    assert stats["stage"] == "sum"
    assert stats["Timing"] >= 0
    assert "cprofile" not in stats


def test_profiler_cprofile():
    """Should add cProfile lines when asked."""

    @profiler(quiet=True, add_to_return=True, cprofile=True)
    def _work():
        return sorted(range(1000), reverse=True)[0]

    value, stats = _work()
    assert value == 999
    assert stats["stage"] == "_work"
    assert stats["cprofile"]


def test_profiler_plain_return():
    """Should return the wrapped value only."""

    @profiler(quiet=True)
    def _identity(x):
        return x

    assert _identity("a") == "a"
