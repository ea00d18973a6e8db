"""Versioned column-family storage engine with optional super-column nesting.

Data model: table -> row -> family [-> super key] -> column -> version list.
Every write lands as a Cell carrying an unsigned 128-bit microsecond
timestamp; version lists are kept sorted newest-first and reads resolve
by timestamp (latest or point-in-time). Deletes are tombstone cells so
replication can converge on them like any other write.

The engine is schema-free at the column level: values are opaque byte
strings, only family names (and whether a family is super) are declared
up front.

Concurrency contract: safe for concurrent readers; mutations are
serialized through one lock (a coarse form of the single-writer-per-row
rule). The simulated cluster drives everything single-threaded anyway.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .clock import LogicalClock, UNSET_TS, check_ts
from .errors import (
    DuplicateFamily,
    DuplicateTable,
    EmptyFamilyList,
    InvalidRange,
    SuperKeyMismatch,
    UnknownFamily,
    UnknownTable,
)


@dataclass(frozen=True)
class Cell:
    """One stored version: value bytes, timestamp, tombstone flag."""

    value: bytes
    ts: int
    tombstone: bool = False


@dataclass(frozen=True)
class ColumnPath:
    """Full address of one column: table / row / family [/ super key] / column."""

    table: str
    row_key: bytes
    family: str
    column: str
    super_key: str | None = None

    def coords(self):
        return (self.family, self.super_key, self.column)

    def __str__(self):
        parts = [self.table, self.row_key.decode("utf-8", "backslashreplace"), self.family]
        if self.super_key is not None:
            parts.append(self.super_key)
        parts.append(self.column)
        return "/".join(parts)


def parse_path(text):
    """Parse "table/row/family[/super]/column" into a ColumnPath."""
    parts = text.split("/")
    if len(parts) == 4:
        table, row, family, column = parts
        return ColumnPath(table, row.encode("utf-8"), family, column)
    if len(parts) == 5:
        table, row, family, super_key, column = parts
        return ColumnPath(table, row.encode("utf-8"), family, column, super_key)
    raise ValueError("path needs 4 or 5 slash-separated parts: %r" % text)


@dataclass(frozen=True)
class TableSchema:
    name: str
    families: dict  # family name -> is_super
    created_at: int

    def is_super(self, family):
        return self.families[family]


class _Table:
    __slots__ = ("schema", "rows")

    def __init__(self, schema):
        self.schema = schema
        # row_key bytes -> {(family, super_key, column): [Cell ...] ts-descending}
        self.rows = {}


class ColumnStore:
    """In-memory multi-version column-family store."""

    def __init__(self, clock=None):
        self.clock = clock if clock is not None else LogicalClock()
        self._tables = {}
        self._write_lock = threading.RLock()

    # --- schema ---

    def create_table(self, name, families):
        """Register a table with its (family, is_super) list."""
        with self._write_lock:
            if name in self._tables:
                raise DuplicateTable(name)
            if not families:
                raise EmptyFamilyList(name)
            fams = {}
            for fam_name, is_super in families:
                if fam_name in fams:
                    raise DuplicateFamily("%s.%s" % (name, fam_name))
                fams[fam_name] = bool(is_super)
            schema = TableSchema(name, fams, self.clock.next())
            self._tables[name] = _Table(schema)
            return schema

    def ensure_family(self, table, family, is_super=False):
        """Idempotently register an extra family on an existing table.

        Re-declaring an existing family with a different super flag raises.
        """
        t = self._table(table)
        with self._write_lock:
            current = t.schema.families.get(family)
            if current is None:
                t.schema.families[family] = bool(is_super)
            elif current != bool(is_super):
                raise DuplicateFamily("%s.%s declared with conflicting super flag" % (table, family))
        return t.schema

    def has_table(self, name):
        return name in self._tables

    def schema(self, name):
        return self._table(name).schema

    def table_names(self):
        return sorted(self._tables)

    # --- writes ---

    def put(self, path, value, ts=UNSET_TS):
        """Insert one version; returns the effective timestamp.

        ts=0 (the default) asks the node clock for a stamp strictly greater
        than any it issued before. An explicit ts overwrites exactly that
        version slot if it already exists.
        """
        if not isinstance(value, (bytes, bytearray)):
            raise TypeError("values are opaque byte strings, got %r" % type(value))
        return self._insert(path, Cell(bytes(value), 0, False), ts)

    def delete(self, path, ts=UNSET_TS):
        """Insert a tombstone; get_latest turns absent while it is newest."""
        return self._insert(path, Cell(b"", 0, True), ts)

    def _insert(self, path, proto, ts):
        check_ts(ts)
        t = self._table(path.table)
        with self._write_lock:
            is_super = t.schema.families.get(path.family)
            if is_super is None:
                raise UnknownFamily("%s.%s" % (path.table, path.family))
            if is_super and path.super_key is None:
                raise SuperKeyMismatch("family %s is super, path has no super key" % path.family)
            if not is_super and path.super_key is not None:
                raise SuperKeyMismatch("family %s is plain, path has super key %r" % (path.family, path.super_key))
            if ts == UNSET_TS:
                ts = self.clock.next()
            else:
                self.clock.observe(ts)
            cell = Cell(proto.value, ts, proto.tombstone)
            row = t.rows.setdefault(path.row_key, {})
            versions = row.setdefault(path.coords(), [])
            # keep ts-descending order, one cell per (column, ts)
            for i, existing in enumerate(versions):
                if existing.ts == ts:
                    versions[i] = cell
                    return ts
                if existing.ts < ts:
                    versions.insert(i, cell)
                    return ts
            versions.append(cell)
            return ts

    # --- reads ---

    def get_latest(self, path):
        """Newest live cell, or None when absent or the newest is a tombstone."""
        versions = self._versions(path)
        if not versions:
            return None
        head = versions[0]
        return None if head.tombstone else head

    def get_at(self, path, ts):
        """Cell with the greatest stamp <= ts; None if none or it is a tombstone."""
        check_ts(ts)
        for cell in self._versions(path):
            if cell.ts <= ts:
                return None if cell.tombstone else cell
        return None

    def versions(self, path):
        """Full version list (tombstones included), newest first."""
        return list(self._versions(path))

    def _versions(self, path):
        t = self._table(path.table)
        row = t.rows.get(path.row_key)
        if row is None:
            return ()
        return row.get(path.coords(), ())

    # --- scans ---

    def scan(self, table, start_row=b"", end_row=None, family=None, column=None,
             value=None, value_pred=None, ts_range=None, limit=None):
        """Filtered single-table scan.

        Rows come back in ascending byte order as (row_key, cells) pairs,
        each cell a (family, super_key, column, Cell) tuple. Only the
        latest live version of each column is matched unless ts_range is
        given, in which case every live version inside the inclusive
        window is returned.
        """
        t = self._table(table)
        if end_row is not None and start_row > end_row:
            raise InvalidRange("start %r > end %r" % (start_row, end_row))
        if ts_range is not None:
            lo, hi = ts_range
            check_ts(lo)
            check_ts(hi)
            if lo > hi:
                raise InvalidRange("ts window %r > %r" % (lo, hi))

        out = []
        for row_key in sorted(t.rows):
            if row_key < start_row:
                continue
            if end_row is not None and row_key >= end_row:
                continue
            cells = []
            row = t.rows[row_key]
            for coords in sorted(row, key=_coords_sort_key):
                fam, sup, col = coords
                if family is not None and fam != family:
                    continue
                if column is not None and col != column:
                    continue
                if ts_range is None:
                    head = row[coords][0]
                    candidates = [] if head.tombstone else [head]
                else:
                    lo, hi = ts_range
                    candidates = [c for c in reversed(row[coords])
                                  if lo <= c.ts <= hi and not c.tombstone]
                for cell in candidates:
                    if value is not None and cell.value != value:
                        continue
                    if value_pred is not None and not value_pred(cell.value):
                        continue
                    cells.append((fam, sup, col, cell))
            if cells:
                out.append((row_key, cells))
                if limit is not None and len(out) >= limit:
                    break
        return out

    def iter_cells(self, table):
        """Yield (ColumnPath, Cell) over every stored version of a table."""
        t = self._table(table)
        for row_key in sorted(t.rows):
            row = t.rows[row_key]
            for coords in sorted(row, key=_coords_sort_key):
                fam, sup, col = coords
                path = ColumnPath(table, row_key, fam, col, sup)
                for cell in row[coords]:
                    yield path, cell

    # --- garbage collection ---

    def gc(self, table, watermark, keep_latest=True):
        """Drop versions older than the watermark; returns removed count.

        keep_latest preserves the newest version of each column even when
        it is older than the watermark, except when that newest version is
        a tombstone: a tombstone with no newer live write is dropped along
        with everything it shadows, which is how deleted data ages out.
        """
        check_ts(watermark)
        t = self._table(table)
        removed = 0
        with self._write_lock:
            for row_key in list(t.rows):
                row = t.rows[row_key]
                for coords in list(row):
                    versions = row[coords]
                    newest = versions[0]
                    kept = []
                    for i, cell in enumerate(versions):
                        if cell.ts >= watermark:
                            kept.append(cell)
                        elif keep_latest and i == 0 and not newest.tombstone:
                            kept.append(cell)
                        else:
                            removed += 1
                    if kept:
                        row[coords] = kept
                    else:
                        del row[coords]
                if not row:
                    del t.rows[row_key]
        return removed

    # --- internals ---

    def _table(self, name):
        try:
            return self._tables[name]
        except KeyError:
            raise UnknownTable(name) from None


def _coords_sort_key(coords):
    fam, sup, col = coords
    return (fam, sup if sup is not None else "", col)
