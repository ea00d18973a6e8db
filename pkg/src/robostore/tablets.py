"""Three-level tablet location: root -> meta -> user, with client caches.

The authoritative hierarchy lives in a TabletDirectory (the simulated
cluster's shared registry); a single mutable root pointer plays the role
of the externally stored bootstrap record. Clients cache user-tablet
locations and fall back to a full three-hop traversal when a cached node
answers that it no longer serves the range. Every resolved lookup is
appended to a shared query log which later clients can replay to warm
their caches.

Hop counting: a hop is a lookup contact at the root, meta or user level.
Verifying a cached location against its node models the data request the
caller was about to send anyway and is not a lookup hop, which is why a
warm correct cache resolves in zero hops.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import Unavailable, UnknownRange, UnknownTable

ROOT = "root"
META = "meta"
USER = "user"

_META_SEP = b"\x00"


@dataclass(frozen=True)
class TabletRange:
    """Half-open key range of one table; empty end_key means +infinity."""

    table: str
    start_key: bytes
    end_key: bytes  # b"" = +inf

    def contains(self, key):
        if key < self.start_key:
            return False
        return self.end_key == b"" or key < self.end_key

    def __str__(self):
        end = self.end_key.decode("utf-8", "backslashreplace") if self.end_key else "+inf"
        return "%s[%s,%s)" % (self.table, self.start_key.decode("utf-8", "backslashreplace"), end)


@dataclass(frozen=True)
class TabletLocation:
    range: TabletRange
    node: int
    level: str


@dataclass(frozen=True)
class QueryLogEntry:
    table: str
    row_key: bytes
    location: TabletLocation
    ts: int


@dataclass
class LocateResult:
    location: TabletLocation
    hops: list  # [(level, node)] lookup contacts, in order
    stale_detected: bool


class TabletDirectory:
    """Authoritative hierarchy plus the shared query log."""

    def __init__(self):
        self.root_pointer = None  # node hosting the root tablet
        self._root = None         # TabletLocation of the root tablet
        self._meta = []           # [TabletLocation] over the meta keyspace
        self._user = {}           # table -> [TabletLocation] sorted by start
        self.query_log = []
        self._log_ts = 0
        self.root_unreachable = False  # simulated partition of the bootstrap record

    # --- building ---

    def build(self, tables, nodes, meta_node=None, root_node=None):
        """Lay out user tablets from split keys and wire the hierarchy.

        tables maps table name -> sorted list of split keys; nodes are
        assigned to user tablets round-robin. One meta tablet spans the
        whole meta keyspace unless callers re-balance by hand.
        """
        if not nodes:
            raise ValueError("need at least one node")
        self.root_pointer = root_node if root_node is not None else nodes[0]
        self._root = TabletLocation(TabletRange("@root", b"", b""), self.root_pointer, ROOT)
        meta_owner = meta_node if meta_node is not None else nodes[min(1, len(nodes) - 1)]
        self._meta = [TabletLocation(TabletRange("@meta", b"", b""), meta_owner, META)]
        self._user = {}
        i = 0
        for table in sorted(tables):
            splits = list(tables[table])
            bounds = [b""] + splits + [b""]
            tablets = []
            for lo, hi in zip(bounds[:-1], bounds[1:]):
                tablets.append(TabletLocation(TabletRange(table, lo, hi), nodes[i % len(nodes)], USER))
                i += 1
            self._user[table] = tablets
        return self

    # --- authoritative lookups (what the contacted nodes answer) ---

    def meta_key(self, table, row_key):
        return table.encode("utf-8") + _META_SEP + row_key

    def root_tablet(self):
        if self.root_unreachable:
            raise Unavailable("root pointer unreachable")
        return self._root

    def meta_lookup(self, node, table, row_key):
        """Ask `node`, serving the root tablet, where the meta tablet is."""
        if self._root.node != node:
            return None  # NotMine
        key = self.meta_key(table, row_key)
        for loc in self._meta:
            if loc.range.contains(key):
                return loc
        return None

    def user_lookup(self, node, table, row_key):
        """Ask `node`, serving a meta tablet, where the user tablet is."""
        key = self.meta_key(table, row_key)
        serving = any(loc.node == node and loc.range.contains(key) for loc in self._meta)
        if not serving:
            return None
        if table not in self._user:
            raise UnknownTable(table)
        for loc in self._user[table]:
            if loc.range.contains(row_key):
                return loc
        return None

    def node_serves(self, node, location):
        """Data-request probe: does the node still serve this user range?"""
        for loc in self._user.get(location.range.table, []):
            if loc.range == location.range:
                return loc.node == node
        return False  # range no longer exists (split/merge out of scope)

    def authoritative_location(self, table, row_key):
        if table not in self._user:
            raise UnknownTable(table)
        for loc in self._user[table]:
            if loc.range.contains(row_key):
                return loc
        raise UnknownRange("%s %r" % (table, row_key))

    # --- mutation ---

    def move_tablet(self, rng, new_node):
        """Atomically reassign one tablet; caches are deliberately not told."""
        if self._root is not None and self._root.range == rng:
            self._root = TabletLocation(rng, new_node, ROOT)
            self.root_pointer = new_node
            return
        for i, loc in enumerate(self._meta):
            if loc.range == rng:
                self._meta[i] = TabletLocation(rng, new_node, META)
                return
        for table, tablets in self._user.items():
            for i, loc in enumerate(tablets):
                if loc.range == rng:
                    tablets[i] = TabletLocation(rng, new_node, USER)
                    return
        raise UnknownRange(str(rng))

    def log(self, table, row_key, location):
        self._log_ts += 1
        self.query_log.append(QueryLogEntry(table, row_key, location, self._log_ts))


class LocatorClient:
    """Per-client location cache over a shared directory."""

    def __init__(self, directory):
        self.directory = directory
        self._cache = {}  # table -> {TabletRange: node}
        self.hits = 0
        self.misses = 0

    def locate(self, table, row_key):
        """Resolve the user tablet serving (table, row_key).

        Cache hit: verify against the cached node; if it still serves the
        range this is a zero-hop resolution. A stale hit or a miss walks
        root pointer -> root tablet -> meta tablet -> user tablet, three
        lookup hops, then repairs the cache and appends to the query log.
        """
        directory = self.directory
        if table not in directory._user:
            raise UnknownTable(table)
        hops = []
        stale = False

        cached = self._cache_lookup(table, row_key)
        if cached is not None:
            rng, node = cached
            if directory.node_serves(node, TabletLocation(rng, node, USER)):
                self.hits += 1
                return LocateResult(TabletLocation(rng, node, USER), hops, False)
            stale = True
            del self._cache[table][rng]
        self.misses += 1

        root = directory.root_tablet()  # chubby-style pointer read, not a hop
        hops.append((ROOT, root.node))
        meta = directory.meta_lookup(root.node, table, row_key)
        if meta is None:
            raise Unavailable("root tablet did not answer for %s" % table)
        hops.append((META, meta.node))
        user = directory.user_lookup(meta.node, table, row_key)
        if user is None:
            raise UnknownRange("%s %r" % (table, row_key))
        hops.append((USER, user.node))
        if not directory.node_serves(user.node, user):
            raise Unavailable("hierarchy raced a move for %s" % table)

        self._cache.setdefault(table, {})[user.range] = user.node
        directory.log(table, row_key, user)
        return LocateResult(user, hops, stale)

    def _cache_lookup(self, table, row_key):
        for rng, node in self._cache.get(table, {}).items():
            if rng.contains(row_key):
                return rng, node
        return None

    def warm_from_log(self, query_log):
        """Preload the newest resolution per range found in a query log."""
        newest = {}
        for entry in query_log:
            key = (entry.table, entry.location.range)
            cur = newest.get(key)
            if cur is None or entry.ts >= cur.ts:
                newest[key] = entry
        for (table, rng), entry in newest.items():
            self._cache.setdefault(table, {})[rng] = entry.location.node
        return len(newest)

    def cache_size(self):
        return sum(len(v) for v in self._cache.values())
