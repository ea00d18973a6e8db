import random

import pytest

from robostore.errors import (
    DuplicateFamily,
    DuplicateTable,
    EmptyFamilyList,
    InvalidRange,
    InvalidTimestamp,
    SuperKeyMismatch,
    UnknownFamily,
    UnknownTable,
)
from robostore.storage import Cell, ColumnPath, ColumnStore


def make_store():
    store = ColumnStore()
    store.create_table("webtable", [("anchor", True), ("contents", False)])
    return store


def path(row=b"r1", family="contents", column="c1", super_key=None, table="webtable"):
    return ColumnPath(table, row, family, column, super_key)


# --- create_table ---

def test_create_single_super_family():
    store = ColumnStore()
    schema = store.create_table("webtable", [("anchor", True)])
    assert schema.families == {"anchor": True}


def test_create_two_plain_families():
    # two plain families, one per instruction group
    store = ColumnStore()
    schema = store.create_table("hand", [("thumb", False), ("knuckles", False)])
    assert set(schema.families) == {"thumb", "knuckles"}
    assert not any(schema.families.values())


def test_create_duplicate_table():
    store = make_store()
    with pytest.raises(DuplicateTable):
        store.create_table("webtable", [("x", False)])


def test_create_empty_family_list():
    store = ColumnStore()
    with pytest.raises(EmptyFamilyList):
        store.create_table("t", [])


def test_create_duplicate_family_name():
    store = ColumnStore()
    with pytest.raises(DuplicateFamily):
        store.create_table("t", [("a", False), ("a", True)])


def test_ensure_family_is_idempotent():
    store = make_store()
    store.ensure_family("webtable", "extra")
    store.ensure_family("webtable", "extra")
    assert store.schema("webtable").families["extra"] is False
    with pytest.raises(DuplicateFamily):
        store.ensure_family("webtable", "extra", is_super=True)


# --- put ---

def test_put_super_column_layout():
    store = ColumnStore()
    store.create_table("t", [("column family 1", True)])
    p = ColumnPath("t", b"row", "column family 1", "property 1", "super key 1")
    ts = store.put(p, b"value")
    assert ts > 0
    assert store.get_latest(p) == Cell(b"value", ts)


def test_put_explicit_ts_overwrites_slot():
    store = make_store()
    p = path()
    ts = store.put(p, b"v1")
    store.put(p, b"v2", ts=ts)
    assert store.get_latest(p).value == b"v2"
    assert len(store.versions(p)) == 1


def test_put_auto_ts_strictly_increasing():
    store = make_store()
    p = path()
    stamps = [store.put(p, b"v%d" % i) for i in range(1000)]
    assert all(b > a for a, b in zip(stamps, stamps[1:]))
    assert len(set(stamps)) == 1000


def test_put_errors():
    store = make_store()
    with pytest.raises(UnknownTable):
        store.put(path(table="nope"), b"v")
    with pytest.raises(UnknownFamily):
        store.put(path(family="nope"), b"v")
    with pytest.raises(SuperKeyMismatch):
        store.put(path(family="anchor"), b"v")  # super family, no super key
    with pytest.raises(SuperKeyMismatch):
        store.put(path(super_key="sk"), b"v")  # plain family, super key given
    with pytest.raises(InvalidTimestamp):
        store.put(path(), b"v", ts=1 << 128)


def test_values_round_trip_byte_exact():
    store = make_store()
    blob = bytes(range(256)) * 3
    store.put(path(), blob)
    assert store.get_latest(path()).value == blob


# --- get_latest ---

def test_latest_replaces_old_score():
    store = make_store()
    p = path(column="score")
    store.put(p, b"old score", ts=5)
    store.put(p, b"new score", ts=9)
    assert store.get_latest(p) == Cell(b"new score", 9)


def test_latest_on_empty_store():
    store = make_store()
    assert store.get_latest(path()) is None


def test_latest_matches_replay_oracle():
    rng = random.Random(42)
    store = make_store()
    log = []
    cols = [path(column="c%d" % i) for i in range(5)]
    for i in range(300):
        p = rng.choice(cols)
        ts = rng.randint(1, 10_000)
        value = b"v%d" % i
        store.put(p, value, ts=ts)
        log.append((p, ts, value))
    for p in cols:
        entries = [(ts, v) for (lp, ts, v) in log if lp == p]
        expect = None
        if entries:
            expect = max(entries, key=lambda e: e[0])[1]
        got = store.get_latest(p)
        assert (got.value if got else None) == expect


# --- get_at ---

def test_get_at_between_versions():
    store = make_store()
    p = path()
    store.put(p, b"a", ts=3)
    store.put(p, b"b", ts=7)
    assert store.get_at(p, 5).value == b"a"
    assert store.get_at(p, 7).value == b"b"


def test_get_at_before_first_write():
    store = make_store()
    p = path()
    store.put(p, b"a", ts=3)
    assert store.get_at(p, 2) is None


def test_get_at_matches_linear_scan_oracle():
    rng = random.Random(7)
    store = make_store()
    p = path()
    versions = []
    for i in range(60):
        ts = rng.randint(1, 500)
        if rng.random() < 0.2:
            store.delete(p, ts=ts)
            versions = [v for v in versions if v[0] != ts] + [(ts, None)]
        else:
            value = b"x%d" % i
            store.put(p, value, ts=ts)
            versions = [v for v in versions if v[0] != ts] + [(ts, value)]
    for probe in range(0, 520, 3):
        older = [v for v in versions if v[0] <= probe]
        expect = max(older, key=lambda v: v[0])[1] if older else None
        got = store.get_at(p, probe)
        assert (got.value if got else None) == expect


# --- delete ---

def test_delete_then_latest_absent():
    store = make_store()
    p = path()
    store.put(p, b"v")
    store.delete(p)
    assert store.get_latest(p) is None


def test_delete_shadowed_by_newer_write():
    store = make_store()
    p = path()
    store.delete(p, ts=4)
    store.put(p, b"alive", ts=6)
    assert store.get_latest(p).value == b"alive"


def test_put_delete_sequences_match_replay_oracle():
    rng = random.Random(99)
    store = make_store()
    cols = [path(column="c%d" % i) for i in range(4)]
    latest = {}
    for i in range(400):
        p = rng.choice(cols)
        if rng.random() < 0.3:
            ts = store.delete(p)
            latest.setdefault(str(p), []).append((ts, None))
        else:
            value = b"d%d" % i
            ts = store.put(p, value)
            latest.setdefault(str(p), []).append((ts, value))
    for p in cols:
        entries = latest.get(str(p), [])
        expect = max(entries, key=lambda e: e[0])[1] if entries else None
        got = store.get_latest(p)
        assert (got.value if got else None) == expect


# --- scan ---

def seed_rows(store):
    for row, value in [(b"a", b"1"), (b"m", b"2"), (b"z", b"3")]:
        store.put(path(row=row), value)


def test_scan_empty_table():
    store = make_store()
    assert store.scan("webtable") == []


def test_scan_row_range_sorted():
    store = make_store()
    seed_rows(store)
    rows = store.scan("webtable", start_row=b"a", end_row=b"n")
    assert [r for r, _ in rows] == [b"a", b"m"]


def test_scan_invalid_range():
    store = make_store()
    with pytest.raises(InvalidRange):
        store.scan("webtable", start_row=b"z", end_row=b"a")


def test_scan_value_predicate_matches_full_dump_oracle():
    rng = random.Random(5)
    store = make_store()
    for i in range(40):
        store.put(path(row=b"r%02d" % rng.randint(0, 9), column="c%d" % rng.randint(0, 3)),
                  b"v%d" % rng.randint(0, 5))
    pred = lambda v: v.endswith(b"3")
    got = store.scan("webtable", value_pred=pred)
    # oracle: filter the full dump by latest live version + predicate
    full = store.scan("webtable")
    expect = []
    for row, cells in full:
        keep = [c for c in cells if pred(c[3].value)]
        if keep:
            expect.append((row, keep))
    assert got == expect


def test_scan_latest_only_unless_ts_window():
    store = make_store()
    p = path()
    store.put(p, b"old", ts=2)
    store.put(p, b"new", ts=8)
    rows = store.scan("webtable")
    assert rows[0][1] == [("contents", None, "c1", Cell(b"new", 8))]
    windowed = store.scan("webtable", ts_range=(1, 5))
    assert windowed[0][1] == [("contents", None, "c1", Cell(b"old", 2))]


def test_scan_limit_and_duplicate_free():
    store = make_store()
    seed_rows(store)
    rows = store.scan("webtable", limit=2)
    keys = [r for r, _ in rows]
    assert keys == sorted(set(keys)) and len(keys) == 2


# --- gc ---

def test_gc_keep_latest():
    store = make_store()
    p = path()
    for ts in (1, 2, 3):
        store.put(p, b"v%d" % ts, ts=ts)
    removed = store.gc("webtable", watermark=10, keep_latest=True)
    assert removed == 2
    assert [c.ts for c in store.versions(p)] == [3]


def test_gc_zero_watermark_noop():
    store = make_store()
    store.put(path(), b"v", ts=1)
    assert store.gc("webtable", watermark=0) == 0


def test_gc_drops_stale_tombstone_chains():
    store = make_store()
    p = path()
    store.put(p, b"v", ts=2)
    store.delete(p, ts=5)
    removed = store.gc("webtable", watermark=10, keep_latest=True)
    assert removed == 2
    assert store.versions(p) == []
    assert store.get_latest(p) is None


def test_gc_random_histories_match_filter_oracle():
    rng = random.Random(123)
    for trial in range(30):
        store = make_store()
        cols = [path(row=b"r%d" % rng.randint(0, 2), column="c%d" % i) for i in range(3)]
        history = {}
        for _ in range(60):
            p = rng.choice(cols)
            ts = rng.randint(1, 100)
            if rng.random() < 0.25:
                store.delete(p, ts=ts)
                kind = "tomb"
            else:
                store.put(p, b"x", ts=ts)
                kind = "live"
            history.setdefault(str(p), {})[ts] = kind
        watermark = rng.randint(0, 110)
        keep_latest = rng.random() < 0.5
        store.gc("webtable", watermark, keep_latest=keep_latest)
        for p in cols:
            versions = sorted(history.get(str(p), {}).items(), reverse=True)
            if not versions:
                continue
            survivors = []
            for i, (ts, kind) in enumerate(versions):
                if ts >= watermark:
                    survivors.append(ts)
                elif keep_latest and i == 0 and kind == "live":
                    survivors.append(ts)
            assert [c.ts for c in store.versions(p)] == survivors, (trial, str(p))


def test_gc_never_changes_latest_when_keeping():
    rng = random.Random(321)
    store = make_store()
    cols = [path(column="c%d" % i) for i in range(6)]
    for _ in range(200):
        p = rng.choice(cols)
        if rng.random() < 0.2:
            store.delete(p, ts=rng.randint(1, 300))
        else:
            store.put(p, b"g", ts=rng.randint(1, 300))
    before = {str(p): store.get_latest(p) for p in cols}
    store.gc("webtable", watermark=rng.randint(0, 350), keep_latest=True)
    after = {str(p): store.get_latest(p) for p in cols}
    assert before == after


def test_gc_unknown_table():
    store = make_store()
    with pytest.raises(UnknownTable):
        store.gc("nope", 10)


# --- invariants ---

def test_version_lists_strictly_ordered():
    rng = random.Random(11)
    store = make_store()
    p = path()
    for _ in range(100):
        store.put(p, b"v", ts=rng.randint(1, 50))
    stamps = [c.ts for c in store.versions(p)]
    assert stamps == sorted(set(stamps), reverse=True)


def test_full_range_scan_equals_table_dump():
    store = make_store()
    seed_rows(store)
    assert store.scan("webtable") == store.scan("webtable", start_row=b"", end_row=None)
