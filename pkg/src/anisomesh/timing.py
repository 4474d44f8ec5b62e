"""Process-wide accumulator for wall time spent in shared services.

Colouring and deferred-op commits run inside every adaptation pass, so
their cost cannot be measured by timing the pass calls themselves. The
instrumented call sites add their elapsed seconds here; the driver
drains the buckets around each phase.
"""

from collections import defaultdict

_acc = defaultdict(float)


def add(bucket, seconds):
    _acc[bucket] += seconds


def drain():
    """Return accumulated seconds per bucket and reset the counters."""
    out = dict(_acc)
    _acc.clear()
    return out
