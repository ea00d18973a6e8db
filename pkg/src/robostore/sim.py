"""Deterministic in-process cluster simulation.

A seeded discrete-event loop carries every message between simulated
nodes; identical (seed, script) pairs replay to byte-identical traces.
Keys are hash-sharded across nodes with the owner plus the next R-1 ring
neighbours as the replica set. Under partition the network drops
cross-group messages; CP mode routes reads and writes through the shard
owner and demands majority acknowledgment from the replica set
(consistency kept, availability sacrificed), while AP mode lets any
reachable replica accept data and repairs divergence with last-write-
wins anti-entropy after heal.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass

from .clock import LogicalClock
from .errors import InvalidConfig, Unavailable

# microseconds per simulated tick, for node clocks
_TICK_US = 1000


def stable_hash(text):
    """Process-independent hash used for all shard placement."""
    if isinstance(text, str):
        text = text.encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "big")


class EventLoop:
    """Virtual-time event queue ordered by (deliver_at, seq)."""

    def __init__(self, seed=0):
        self.now = 0
        self.rng = random.Random(seed)
        self._seq = 0
        self._queue = []
        self.trace = None  # list of trace lines when enabled

    def enable_trace(self):
        self.trace = []

    def emit(self, node, text):
        if self.trace is not None:
            self.trace.append("T=%d %s %s" % (self.now, node, text))

    def at(self, tick, fn):
        if tick < self.now:
            tick = self.now
        self._seq += 1
        heapq.heappush(self._queue, (tick, self._seq, fn))

    def after(self, delay, fn):
        self.at(self.now + delay, fn)

    def step(self):
        if not self._queue:
            return False
        tick, _, fn = heapq.heappop(self._queue)
        self.now = max(self.now, tick)
        fn()
        return True

    def run_until_idle(self, max_events=1_000_000):
        events = 0
        while self.step():
            events += 1
            if events > max_events:
                raise RuntimeError("event loop did not quiesce within %d events" % max_events)
        return events

    def run_for(self, ticks):
        """Process everything due within the next `ticks`, then advance."""
        deadline = self.now + ticks
        while self._queue and self._queue[0][0] <= deadline:
            self.step()
        self.now = deadline

    def run_until(self, predicate, max_ticks=10_000):
        """Drive the loop until predicate() holds; False on timeout."""
        deadline = self.now + max_ticks
        while not predicate():
            if not self._queue or self._queue[0][0] > deadline:
                self.now = deadline
                return predicate()
            self.step()
        return True


class Network:
    """Message fabric with seeded delays, drops, partitions and crashes."""

    def __init__(self, loop, drop_probability=0.0, delay_min=1, delay_max=1):
        self.loop = loop
        self.drop_probability = drop_probability
        self.delay_min = delay_min
        self.delay_max = delay_max
        self._handlers = {}
        self._alive = {}
        self._group = {}

    def register(self, node_id, handler):
        self._handlers[node_id] = handler
        self._alive[node_id] = True
        self._group[node_id] = 0

    def node_ids(self):
        return sorted(self._handlers)

    def is_alive(self, node_id):
        return self._alive[node_id]

    def set_alive(self, node_id, alive):
        self._alive[node_id] = alive

    def partition(self, groups):
        """Split nodes into isolation groups; unlisted nodes form one more."""
        seen = set()
        for gid, group in enumerate(groups, start=1):
            for node in group:
                if node in seen:
                    raise InvalidConfig("node %r in two partition groups" % node)
                if node not in self._handlers:
                    raise InvalidConfig("unknown node %r" % node)
                seen.add(node)
                self._group[node] = gid
        for node in self._handlers:
            if node not in seen:
                self._group[node] = 0

    def heal(self):
        for node in self._group:
            self._group[node] = 0

    def reachable(self, a, b):
        return (self._alive[a] and self._alive[b]
                and self._group[a] == self._group[b])

    def send(self, src, dst, kind, payload):
        if not self._alive[src]:
            return
        if self._group[src] != self._group[dst]:
            return
        if self.drop_probability and self.loop.rng.random() < self.drop_probability:
            return
        delay = self.loop.rng.randint(self.delay_min, self.delay_max)

        def deliver():
            if not self._alive[dst]:
                return
            if self._group[src] != self._group[dst]:
                return  # partition arrived while in flight
            self._handlers[dst](src, kind, payload)

        self.loop.after(delay, deliver)


@dataclass
class SimConfig:
    node_count: int
    replication_factor: int = 1
    mode: str = "AP"
    seed: int = 0
    drop_probability: float = 0.0
    delay_min: int = 1
    delay_max: int = 1
    op_timeout: int = 30

    def validate(self):
        if self.node_count < 1:
            raise InvalidConfig("node_count must be >= 1")
        if not 1 <= self.replication_factor <= self.node_count:
            raise InvalidConfig("need 1 <= R <= node_count")
        if self.mode not in ("CP", "AP"):
            raise InvalidConfig("mode must be CP or AP")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise InvalidConfig("drop_probability must be within [0, 1]")
        if not 1 <= self.delay_min <= self.delay_max:
            raise InvalidConfig("need 1 <= delay_min <= delay_max")
        return self


class _Request:
    __slots__ = ("id", "done", "ok", "value", "ts")

    def __init__(self, req_id):
        self.id = req_id
        self.done = False
        self.ok = False
        self.value = None
        self.ts = None

    def complete(self, ok, value=None, ts=None):
        if self.done:
            return
        self.done = True
        self.ok = ok
        self.value = value
        self.ts = ts


class StoreNode:
    """One replica node: local versioned KV plus the message handlers."""

    def __init__(self, node_id, cluster):
        self.id = node_id
        self.cluster = cluster
        self.kv = {}  # key -> (ts, origin, value)
        loop = cluster.loop
        self.clock = LogicalClock(time_source=lambda: loop.now * _TICK_US)
        # coordinator-side quorum bookkeeping, req id -> state
        self.pending = {}

    # --- local state ---

    def store_version(self, key, version):
        current = self.kv.get(key)
        if current is None or (version[0], version[1]) > (current[0], current[1]):
            self.kv[key] = version
            return True
        return False

    # --- message handling ---

    def handle(self, src, kind, payload):
        fn = getattr(self, "_on_" + kind.lower())
        fn(src, payload)

    def _on_fwd_write(self, src, payload):
        self._coordinate_write(payload["key"], payload["value"], payload["req"], reply_to=src)

    def _on_fwd_read(self, src, payload):
        self._coordinate_read(payload["key"], payload["req"], reply_to=src)

    def _coordinate_write(self, key, value, req, reply_to=None):
        ts = self.clock.next()
        version = (ts, self.id, value)
        cluster = self.cluster
        replicas = cluster.replica_set(key)
        acks = 1 if self.id in replicas else 0
        if self.id in replicas:
            self.store_version(key, version)
        needed = cluster.majority(key) if cluster.config.mode == "CP" else 1
        self.pending[req] = {
            "kind": "write", "acks": acks, "needed": needed,
            "reply_to": reply_to, "ts": ts, "req": req,
        }
        cluster.loop.emit(self.id, "COORD WRITE %s ts=%d" % (key, ts))
        for replica in replicas:
            if replica != self.id:
                cluster.net.send(self.id, replica, "STORE",
                                 {"key": key, "version": version, "req": req})
        self._check_quorum(req)

    def _coordinate_read(self, key, req, reply_to=None):
        cluster = self.cluster
        if cluster.config.mode == "CP":
            replicas = cluster.replica_set(key)
            acks = 1 if self.id in replicas else 0
            self.pending[req] = {
                "kind": "read", "acks": acks, "needed": cluster.majority(key),
                "reply_to": reply_to, "key": key, "req": req,
            }
            for replica in replicas:
                if replica != self.id:
                    cluster.net.send(self.id, replica, "READ_CONFIRM", {"key": key, "req": req})
            self._check_quorum(req)
        else:
            self._answer_read(req, reply_to, self.kv.get(key))

    def _on_store(self, src, payload):
        adopted = self.store_version(payload["key"], tuple(payload["version"]))
        self.cluster.loop.emit(self.id, "STORE %s ts=%d%s"
                               % (payload["key"], payload["version"][0], "" if adopted else " stale"))
        self.cluster.net.send(self.id, src, "STORE_ACK", {"req": payload["req"]})

    def _on_store_ack(self, src, payload):
        entry = self.pending.get(payload["req"])
        if entry and entry["kind"] == "write":
            entry["acks"] += 1
            self._check_quorum(payload["req"])

    def _on_read_confirm(self, src, payload):
        self.cluster.net.send(self.id, src, "READ_CONFIRM_ACK", {"req": payload["req"]})

    def _on_read_confirm_ack(self, src, payload):
        entry = self.pending.get(payload["req"])
        if entry and entry["kind"] == "read":
            entry["acks"] += 1
            self._check_quorum(payload["req"])

    def _check_quorum(self, req):
        entry = self.pending.get(req)
        if entry is None or entry["acks"] < entry["needed"]:
            return
        del self.pending[req]
        if entry["kind"] == "write":
            self._answer_write(req, entry["reply_to"], entry["ts"])
        else:
            self._answer_read(req, entry["reply_to"], self.kv.get(entry["key"]))

    def _answer_write(self, req, reply_to, ts):
        if reply_to is None:
            self.cluster.complete(req, True, ts=ts)
        else:
            self.cluster.net.send(self.id, reply_to, "WRITE_DONE", {"req": req, "ts": ts})

    def _answer_read(self, req, reply_to, version):
        if reply_to is None:
            self.cluster.complete_read(req, version)
        else:
            self.cluster.net.send(self.id, reply_to, "READ_DONE", {"req": req, "version": version})

    def _on_write_done(self, src, payload):
        self.cluster.complete(payload["req"], True, ts=payload["ts"])

    def _on_read_done(self, src, payload):
        self.cluster.complete_read(payload["req"], payload["version"])

    def _on_getv(self, src, payload):
        self.cluster.net.send(self.id, src, "GETV_RESP",
                              {"req": payload["req"], "version": self.kv.get(payload["key"])})

    def _on_getv_resp(self, src, payload):
        self.cluster.complete_read(payload["req"], payload["version"])

    def _on_ap_store(self, src, payload):
        adopted = self.store_version(payload["key"], tuple(payload["version"]))
        self.cluster.loop.emit(self.id, "STORE %s ts=%d%s"
                               % (payload["key"], payload["version"][0], "" if adopted else " stale"))
        self.cluster.net.send(self.id, src, "AP_STORE_ACK",
                              {"req": payload["req"], "ts": payload["version"][0]})

    def _on_ap_store_ack(self, src, payload):
        self.cluster.complete(payload["req"], True, ts=payload["ts"])

    def _on_sync(self, src, payload):
        changed = 0
        for key, version in payload["entries"]:
            if self.store_version(key, tuple(version)):
                changed += 1
        if changed:
            self.cluster.loop.emit(self.id, "SYNC adopted=%d from=%d" % (changed, src))


class Cluster:
    """Facade owning the loop, network and nodes of one simulation."""

    def __init__(self, config):
        self.config = config.validate()
        self.loop = EventLoop(config.seed)
        self.net = Network(self.loop, config.drop_probability,
                           config.delay_min, config.delay_max)
        self.nodes = []
        for i in range(config.node_count):
            node = StoreNode(i, self)
            self.nodes.append(node)
            self.net.register(i, node.handle)
        self._next_req = 0
        self._requests = {}

    # --- sharding ---

    def owner(self, key):
        return stable_hash(key) % self.config.node_count

    def replica_set(self, key):
        start = self.owner(key)
        n = self.config.node_count
        return [(start + i) % n for i in range(self.config.replication_factor)]

    def majority(self, key):
        return len(self.replica_set(key)) // 2 + 1

    # --- partitions ---

    def partition(self, groups):
        self.loop.emit("-", "PARTITION %s" % "|".join(
            ",".join(str(n) for n in group) for group in groups))
        self.net.partition(groups)

    def heal(self):
        self.loop.emit("-", "HEAL")
        self.net.heal()
        self.loop.after(1, self.run_anti_entropy_round)

    # --- anti-entropy ---

    def run_anti_entropy_round(self):
        """Each replica pushes its versions to its peers; higher stamp wins."""
        self.loop.emit("-", "ANTI_ENTROPY")
        for node in self.nodes:
            if not self.net.is_alive(node.id):
                continue
            by_peer = {}
            for key in sorted(node.kv):
                replicas = self.replica_set(key)
                if node.id not in replicas:
                    continue
                for peer in replicas:
                    if peer != node.id:
                        by_peer.setdefault(peer, []).append((key, node.kv[key]))
            for peer in sorted(by_peer):
                self.net.send(node.id, peer, "SYNC", {"entries": by_peer[peer]})

    # --- request plumbing ---

    def _new_request(self):
        self._next_req += 1
        req = _Request(self._next_req)
        self._requests[req.id] = req
        return req

    def complete(self, req_id, ok, ts=None):
        req = self._requests.get(req_id)
        if req is not None:
            req.complete(ok, ts=ts)

    def complete_read(self, req_id, version):
        req = self._requests.get(req_id)
        if req is not None:
            if version is None:
                req.complete(True, value=None, ts=None)
            else:
                req.complete(True, value=version[2], ts=version[0])

    def _await(self, req):
        self.loop.run_until(lambda: req.done, max_ticks=self.config.op_timeout)
        del self._requests[req.id]
        if not req.done:
            raise Unavailable("request %d timed out" % req.id)
        return req

    # --- client operations ---

    def client_write(self, key, value, at=None):
        """Write per the configured mode; returns the version stamp."""
        contact = self.owner(key) if at is None else at
        if not self.net.is_alive(contact):
            raise Unavailable("contact node %d is down" % contact)
        req = self._new_request()
        node = self.nodes[contact]
        if self.config.mode == "CP":
            owner = self.owner(key)
            if contact == owner:
                node._coordinate_write(key, value, req.id)
            elif self.net.reachable(contact, owner):
                self.net.send(contact, owner, "FWD_WRITE",
                              {"key": key, "value": value, "req": req.id})
            else:
                del self._requests[req.id]
                raise Unavailable("owner %d unreachable from %d" % (owner, contact))
        else:
            ts = node.clock.next()
            version = (ts, contact, value)
            replicas = self.replica_set(key)
            if contact in replicas:
                node.store_version(key, version)
                self.loop.emit(contact, "STORE %s ts=%d" % (key, ts))
                self.complete(req.id, True, ts=ts)
            for replica in replicas:
                if replica != contact:
                    self.net.send(contact, replica, "AP_STORE",
                                  {"key": key, "version": version, "req": req.id})
        return self._await(req).ts

    def client_read(self, key, at=None):
        """Read per the configured mode; (value, ts) or None when absent."""
        contact = self.owner(key) if at is None else at
        if not self.net.is_alive(contact):
            raise Unavailable("contact node %d is down" % contact)
        req = self._new_request()
        node = self.nodes[contact]
        if self.config.mode == "CP":
            owner = self.owner(key)
            if contact == owner:
                node._coordinate_read(key, req.id)
            elif self.net.reachable(contact, owner):
                self.net.send(contact, owner, "FWD_READ", {"key": key, "req": req.id})
            else:
                del self._requests[req.id]
                raise Unavailable("owner %d unreachable from %d" % (owner, contact))
        else:
            replicas = self.replica_set(key)
            if contact in replicas:
                self.complete_read(req.id, node.kv.get(key))
            else:
                for replica in replicas:
                    self.net.send(contact, replica, "GETV", {"key": key, "req": req.id})
        req = self._await(req)
        if req.value is None and req.ts is None:
            return None
        return req.value, req.ts

    # --- inspection ---

    def replica_dump(self, node_id):
        return dict(self.nodes[node_id].kv)

    def replicas_converged(self, keys=None):
        """True when every replica of every key holds an identical version."""
        if keys is None:
            keys = sorted({k for node in self.nodes for k in node.kv})
        for key in keys:
            versions = {self.nodes[r].kv.get(key) for r in self.replica_set(key)}
            if len(versions) != 1:
                return False
        return True


# --- scenario scripts ---

def run_scenario(config, lines):
    """Execute a PARTITION/HEAL/WRITE/READ/TICK script; returns the trace.

    WRITE and READ accept an optional trailing node id naming the contact
    node, which is how a script exercises both sides of a partition.
    """
    cluster = Cluster(config)
    cluster.loop.enable_trace()
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        op = parts[0].upper()
        if op == "PARTITION":
            groups = [[int(n) for n in chunk.split(",") if n] for chunk in parts[1].split("|")]
            cluster.partition(groups)
        elif op == "HEAL":
            cluster.heal()
            cluster.loop.run_until_idle()
        elif op == "TICK":
            cluster.loop.run_for(int(parts[1]))
        elif op == "WRITE":
            key, value = parts[1], parts[2]
            at = int(parts[3]) if len(parts) > 3 else None
            try:
                ts = cluster.client_write(key, value.encode("utf-8"), at=at)
                cluster.loop.emit("-", "WRITE %s %s -> OK ts=%d" % (key, value, ts))
            except Unavailable:
                cluster.loop.emit("-", "WRITE %s %s -> UNAVAILABLE" % (key, value))
        elif op == "READ":
            key = parts[1]
            at = int(parts[2]) if len(parts) > 2 else None
            try:
                found = cluster.client_read(key, at=at)
                if found is None:
                    cluster.loop.emit("-", "READ %s -> ABSENT" % key)
                else:
                    value, ts = found
                    cluster.loop.emit("-", "READ %s -> %s@%d" % (key, value.decode("utf-8"), ts))
            except Unavailable:
                cluster.loop.emit("-", "READ %s -> UNAVAILABLE" % key)
        else:
            raise ValueError("unknown scenario op: %r" % raw)
    cluster.loop.run_until_idle()
    return cluster, "\n".join(cluster.loop.trace) + "\n"
