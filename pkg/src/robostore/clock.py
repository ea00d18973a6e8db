"""Logical microsecond clocks over a 128-bit timestamp domain."""

from .errors import InvalidTimestamp

MAX_TIMESTAMP = (1 << 128) - 1

# 0 means "unset, assign at write time" everywhere a timestamp is accepted.
UNSET_TS = 0


def check_ts(ts):
    """Validate a caller-supplied timestamp (0 is allowed and means unset)."""
    if not isinstance(ts, int) or ts < 0 or ts > MAX_TIMESTAMP:
        raise InvalidTimestamp("timestamp must be an unsigned 128-bit integer, got %r" % (ts,))
    return ts


class LogicalClock:
    """Per-node clock issuing strictly increasing microsecond stamps.

    next() returns max(time_source(), last_issued + 1), so readings are
    strictly increasing even when the underlying simulated time stalls.
    Without a time source the clock degenerates to a plain counter.
    """

    def __init__(self, time_source=None, start=0):
        self._time_source = time_source
        self._last = start

    def next(self):
        now = self._time_source() if self._time_source is not None else 0
        self._last = max(self._last + 1, now)
        return self._last

    def observe(self, ts):
        """Advance past an externally chosen stamp so later readings stay newest."""
        if ts > self._last:
            self._last = ts

    @property
    def last_issued(self):
        return self._last
