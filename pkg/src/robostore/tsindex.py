"""Two-column timestamp index: labelled real-time stamps per row prefix.

Each index hangs off one (table, row, family) prefix and keeps labelled
entries ordered by microsecond stamp, so "newest value" and time-window
lookups never have to touch the version lists themselves. The index is
maintained by the caller (chained after each put), not by triggers.
"""

from __future__ import annotations

from dataclasses import dataclass

from .clock import check_ts
from .errors import InvalidRange, InvalidTimestamp, UnknownOwner
from .storage import ColumnPath


@dataclass(frozen=True)
class IndexOwner:
    """Prefix an index belongs to: table / row / family."""

    table: str
    row_key: bytes
    family: str

    def __str__(self):
        return "%s/%s/%s" % (self.table, self.row_key.decode("utf-8", "backslashreplace"), self.family)


@dataclass(frozen=True)
class IndexEntry:
    label: str
    ts: int
    target: object  # byte value or a ColumnPath reference

    @property
    def target_is_path(self):
        return isinstance(self.target, ColumnPath)


class TimestampIndex:
    """Ordered label->stamp index for one owner prefix."""

    def __init__(self, owner):
        self.owner = owner
        self._entries = []  # [(ts, seq, IndexEntry)] ascending
        self._seq = 0
        self._label_counter = 0

    def record(self, label, ts, target):
        """Insert an entry in stamp order; re-recording a label replaces it."""
        check_ts(ts)
        if ts == 0:
            raise InvalidTimestamp("index entries need a real (nonzero) stamp")
        if label is None:
            label = self.next_label()
        self._entries = [e for e in self._entries if e[2].label != label]
        self._seq += 1
        entry = IndexEntry(label, ts, target)
        self._entries.append((ts, self._seq, entry))
        self._entries.sort(key=lambda item: (item[0], item[1]))
        return entry

    def next_label(self):
        labels = {e[2].label for e in self._entries}
        while True:
            self._label_counter += 1
            candidate = "T%d" % self._label_counter
            if candidate not in labels:
                return candidate

    def latest(self):
        """Entry with the maximal stamp (later-recorded wins a tie), or None."""
        if not self._entries:
            return None
        return self._entries[-1][2]

    def range(self, t_lo, t_hi):
        """Entries with t_lo <= ts <= t_hi, ascending; bounds inclusive."""
        check_ts(t_lo)
        check_ts(t_hi)
        if t_lo > t_hi:
            raise InvalidRange("%d > %d" % (t_lo, t_hi))
        return [e[2] for e in self._entries if t_lo <= e[0] <= t_hi]

    def entries(self):
        return [e[2] for e in self._entries]

    def __len__(self):
        return len(self._entries)


class TimestampIndexRegistry:
    """All indexes of one store, keyed by owner prefix."""

    def __init__(self):
        self._indexes = {}

    def register_owner(self, table, row_key, family):
        owner = IndexOwner(table, row_key, family)
        if owner not in self._indexes:
            self._indexes[owner] = TimestampIndex(owner)
        return self._indexes[owner]

    def index_record(self, owner, label, ts, target):
        return self._index(owner).record(label, ts, target)

    def index_latest(self, owner):
        return self._index(owner).latest()

    def index_range(self, owner, t_lo, t_hi):
        return self._index(owner).range(t_lo, t_hi)

    def owners(self):
        return sorted(self._indexes, key=str)

    def get(self, owner):
        return self._indexes.get(self._key(owner))

    def _index(self, owner):
        key = self._key(owner)
        if key not in self._indexes:
            raise UnknownOwner(str(key))
        return self._indexes[key]

    @staticmethod
    def _key(owner):
        if isinstance(owner, IndexOwner):
            return owner
        table, row_key, family = owner
        return IndexOwner(table, row_key, family)
