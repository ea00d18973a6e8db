"""Textual load/dump format for stores and their timestamp indexes.

The document is plain JSON shaped like the super-column layout the store
implements: family -> super key -> column -> version list, with each
version an object carrying "value" and a "Time stamp" written as an
unsigned decimal microsecond string. Index blocks serialize under a
"Timestamp super 1" key per owner prefix.

The writer is canonical (fixed key order, sorted names, two-space
indent, trailing newline), so load -> dump is byte-stable: dumping what
the loader read reproduces the canonical document exactly.
"""

from __future__ import annotations

import base64
import json

from .storage import Cell, ColumnPath, ColumnStore, parse_path
from .tsindex import IndexOwner, TimestampIndexRegistry

_PLAIN = "plain"
_SUPER = "super"
_INDEX_BLOCK = "Timestamp super 1"


def _encode_bytes(raw):
    """Bytes -> JSON-safe field pair. UTF-8 text stays readable."""
    try:
        text = raw.decode("utf-8")
        if text.encode("utf-8") == raw:
            return "value", text
    except UnicodeDecodeError:
        pass
    return "value b64", base64.b64encode(raw).decode("ascii")


def _decode_bytes(obj):
    if "value b64" in obj:
        return base64.b64decode(obj["value b64"])
    return obj["value"].encode("utf-8")


def _version_obj(cell):
    key, encoded = _encode_bytes(cell.value)
    obj = {key: encoded, "Time stamp": str(cell.ts)}
    if cell.tombstone:
        obj["tombstone"] = True
    return obj


def _version_cell(obj):
    ts = int(obj["Time stamp"])
    if ts < 0:
        raise ValueError("Time stamp must be unsigned: %r" % obj["Time stamp"])
    return Cell(_decode_bytes(obj), ts, bool(obj.get("tombstone", False)))


def _row_name(row_key):
    try:
        text = row_key.decode("utf-8")
        if text.encode("utf-8") == row_key and not text.startswith("b64:"):
            return text
    except UnicodeDecodeError:
        pass
    return "b64:" + base64.b64encode(row_key).decode("ascii")


def _row_key(name):
    if name.startswith("b64:"):
        return base64.b64decode(name[4:])
    return name.encode("utf-8")


def dumps_store(store, indexes=None):
    """Serialize a store (and optional index registry) canonically."""
    doc = {"tables": {}}
    for table in store.table_names():
        schema = store.schema(table)
        fam_block = {name: (_SUPER if schema.families[name] else _PLAIN)
                     for name in sorted(schema.families)}
        rows = {}
        for path, cell in store.iter_cells(table):
            row = rows.setdefault(_row_name(path.row_key), {})
            fam = row.setdefault(path.family, {})
            if path.super_key is not None:
                col_block = fam.setdefault(path.super_key, {})
            else:
                col_block = fam
            col_block.setdefault(path.column, []).append(_version_obj(cell))
        doc["tables"][table] = {
            "column families": fam_block,
            "rows": _sorted_rows(rows, schema),
        }
    if indexes is not None:
        block = {}
        for owner in indexes.owners():
            idx = indexes.get(owner)
            entries = []
            for entry in idx.entries():
                if entry.target_is_path:
                    item = {"path": str(entry.target)}
                else:
                    key, encoded = _encode_bytes(entry.target)
                    item = {key: encoded}
                item["Time stamp"] = str(entry.ts)
                item["label"] = entry.label
                entries.append(item)
            block[str(owner)] = {_INDEX_BLOCK: entries}
        if block:
            doc["timestamp indexes"] = block
    return json.dumps(doc, indent=2, ensure_ascii=True) + "\n"


def _sorted_rows(rows, schema):
    out = {}
    for row_name in sorted(rows):
        fam_out = {}
        for fam in sorted(rows[row_name]):
            body = rows[row_name][fam]
            if schema.families[fam]:
                fam_out[fam] = {sk: dict(sorted(body[sk].items())) for sk in sorted(body)}
            else:
                fam_out[fam] = dict(sorted(body.items()))
        out[row_name] = fam_out
    return out


def loads_store(text, clock=None):
    """Parse a document back into (ColumnStore, TimestampIndexRegistry)."""
    doc = json.loads(text)
    store = ColumnStore(clock=clock)
    for table in sorted(doc.get("tables", {})):
        body = doc["tables"][table]
        families = [(name, kind == _SUPER)
                    for name, kind in sorted(body.get("column families", {}).items())]
        store.create_table(table, families)
        schema = store.schema(table)
        for row_name in sorted(body.get("rows", {})):
            row_key = _row_key(row_name)
            for fam in sorted(body["rows"][row_name]):
                fam_body = body["rows"][row_name][fam]
                if schema.families.get(fam):
                    items = [(sk, col, versions)
                             for sk in sorted(fam_body)
                             for col, versions in sorted(fam_body[sk].items())]
                else:
                    items = [(None, col, versions) for col, versions in sorted(fam_body.items())]
                for super_key, column, versions in items:
                    path = ColumnPath(table, row_key, fam, column, super_key)
                    for obj in versions:
                        cell = _version_cell(obj)
                        if cell.tombstone:
                            store.delete(path, ts=cell.ts)
                        else:
                            store.put(path, cell.value, ts=cell.ts)
    registry = TimestampIndexRegistry()
    for owner_text in sorted(doc.get("timestamp indexes", {})):
        table, row, family = owner_text.split("/")
        idx = registry.register_owner(table, row.encode("utf-8"), family)
        for item in doc["timestamp indexes"][owner_text][_INDEX_BLOCK]:
            if "path" in item:
                target = parse_path(item["path"])
            else:
                target = _decode_bytes(item)
            idx.record(item["label"], int(item["Time stamp"]), target)
    return store, registry


def load_file(path, clock=None):
    with open(path, "r", encoding="utf-8") as fh:
        return loads_store(fh.read(), clock=clock)


def dump_file(path, store, indexes=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_store(store, indexes))
