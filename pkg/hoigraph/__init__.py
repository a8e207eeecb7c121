"""hoigraph."""

__version__ = "0.1.0"

import cProfile
import json
import pstats
import sys
import time
from functools import wraps
from io import StringIO
from typing import Callable, Optional

from loguru import logger as log

fmt = "{time} | HOIGRAPH | {message}"
log.remove()
log.add(sys.stderr, format=fmt)


def profile(
    stage: Optional[str] = None,
    add_to_return: bool = False,
    quiet: bool = False,
    cprofile: bool = False,
):
    """Time a pipeline stage and log the result as JSON."""

    def wrapper(func: Callable):
        """Wrap a function."""
        name = stage or func.__name__

        @wraps(func)
        def wrapped_f(*args, **kwargs):
            """Wrapped function."""
            with Timer() as t:
                prof = cProfile.Profile()
                retval = prof.runcall(func, *args, **kwargs)

            results = {"stage": name, "Timing": t.elapsed}

            if cprofile:
                profile_stream = StringIO()
                ps = pstats.Stats(prof, stream=profile_stream)
                ps.strip_dirs().sort_stats("time", "ncalls").print_stats(20)
                profile_lines = [p for p in profile_stream.getvalue().splitlines() if p]
                # first lines are the pstats summary header
                results["cprofile"] = profile_lines[2:]

            if not quiet:
                log.info(json.dumps(results))

            if add_to_return:
                return retval, results

            return retval

        return wrapped_f

    return wrapper


class Timer(object):
    """Time a code block."""

    def __enter__(self):
        """Start timer."""
        self.start = time.perf_counter()
        return self

    def __exit__(self, ty, val, tb):
        """Stop timer."""
        self.end = time.perf_counter()
        self.elapsed = self.end - self.start
