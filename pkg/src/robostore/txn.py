"""ACID multi-item transactions over the column store via 2PC middleware.

A ring of local transaction managers (LTMs) fronts the shared storage
engine. Items are hash-sharded across LTMs; each LTM replicates every
in-flight transaction state it holds to the next `replica_count` ring
neighbours before acting on it, so a crashed manager can be rebuilt from
its peers.

Commit runs two-phase: the coordinator replicates its intent, sends
PREPARE to every participant (the owners of the read and write items),
each participant validates against prepare-time exclusive item locks
plus read-snapshot stamps, replicates its own state and votes. All-yes
yields a COMMIT decision carrying one commit timestamp; the decision is
durable at the coordinator's replicas before any participant applies.
Writes are buffered until then, which is why consistent reads can go
straight to storage and never see uncommitted data.

Failure handling: a coordinator missing votes past the prepare timeout
aborts; replicas of a dead coordinator take the transaction over and
drive it to the recorded decision (or re-run phase one when none was
reached); a recovering LTM pulls its records back from its replica set
and resumes with its locks restored. The layer tolerates one crashed
LTM at a time, the guarantee replication factor two is sized for.
"""

from __future__ import annotations

from dataclasses import dataclass

from .clock import UNSET_TS
from .errors import LtmDown, TxnNotActive, Unavailable
from .sim import EventLoop, Network, stable_hash
from .storage import Cell

ACTIVE = "ACTIVE"
PREPARED = "PREPARED"
COMMITTED = "COMMITTED"
ABORTED = "ABORTED"

COMMIT = "COMMIT"
ABORT = "ABORT"


@dataclass(frozen=True, order=True)
class TxnId:
    seq: int
    ltm: int

    def __str__(self):
        return "t%d.%d" % (self.seq, self.ltm)


def _copy_record(rec):
    out = dict(rec)
    for key in ("read_set", "write_set", "paths", "votes", "repl_acked", "items"):
        if key in out:
            out[key] = dict(out[key])
    for key in ("acks",):
        if key in out:
            out[key] = set(out[key])
    return out


class LtmNode:
    """One local transaction manager actor."""

    def __init__(self, ltm_id, layer):
        self.id = ltm_id
        self.layer = layer
        self.incarnation = 0
        self.coord = {}          # TxnId -> coordinator record this node drives
        self.part = {}           # TxnId -> participant record
        self.replica_store = {}  # (kind, owner, TxnId) -> replicated snapshot
        self.locks = {}          # path_str -> TxnId
        self.watching = set()    # replica keys with a takeover watchdog armed

    # --- plumbing ---

    @property
    def alive(self):
        return self.layer.net.is_alive(self.id)

    def _send(self, dst, kind, payload):
        self.layer.net.send(self.id, dst, kind, payload)

    def _arm(self, delay, fn):
        inc = self.incarnation

        def fire():
            if self.incarnation == inc and self.alive:
                fn()

        self.layer.loop.after(delay, fire)

    def replicas(self):
        return self.layer.replica_ring(self.id)

    def handle(self, src, kind, payload):
        getattr(self, "_on_" + kind.lower())(src, payload)

    # --- replication of transaction state ---

    def _replication_targets(self, rec):
        """Replica set of the record's home LTM, plus that LTM itself when
        someone else is driving the record (takeover)."""
        home = rec["home"]
        targets = [r for r in self.layer.replica_ring(home) if r != self.id]
        if home != self.id:
            targets.append(home)
        return targets

    def replicate_now(self, rec):
        """Push the current snapshot to replicas lagging behind."""
        for replica in self._replication_targets(rec):
            if not self.layer.net.is_alive(replica):
                rec["repl_acked"][replica] = 0  # resync from scratch after recovery
                continue
            if rec["repl_acked"].get(replica, 0) < rec["version"]:
                self._send(replica, "REPLICATE", {
                    "kind": rec["kind"], "owner": rec["home"],
                    "record": _copy_record(rec),
                })

    def replicated_to_alive(self, rec):
        return all(rec["repl_acked"].get(r, 0) >= rec["version"]
                   for r in self._replication_targets(rec) if self.layer.net.is_alive(r))

    def _on_replicate(self, src, payload):
        key = (payload["kind"], payload["owner"], payload["record"]["txn"])
        mine = self.replica_store.get(key)
        if mine is None or mine["version"] < payload["record"]["version"]:
            self.replica_store[key] = payload["record"]
            record = payload["record"]
            # watch commits in flight so a dead coordinator gets replaced;
            # ACTIVE records need no watchdog, there is nothing to drive yet
            if (payload["kind"] == "coord" and not record["done"]
                    and record["state"] != ACTIVE and key not in self.watching):
                self.watching.add(key)
                self._watch_coordinator(key)
        self._send(src, "REPLICATE_ACK", {
            "kind": payload["kind"], "txn": payload["record"]["txn"],
            "version": payload["record"]["version"],
        })

    def _on_replicate_ack(self, src, payload):
        rec = self._record(payload["kind"], payload["txn"])
        if rec is not None:
            acked = rec["repl_acked"].get(src, 0)
            rec["repl_acked"][src] = max(acked, payload["version"])

    def _record(self, kind, txn):
        return (self.coord if kind == "coord" else self.part).get(txn)

    # --- coordinator side ---

    def begin_txn(self, txn):
        rec = {
            "kind": "coord", "txn": txn, "coordinator": self.id, "home": self.id,
            "state": ACTIVE,
            "read_set": {}, "write_set": {}, "paths": {}, "participants": [],
            "votes": {}, "decision": None, "commit_ts": None, "acks": set(),
            "prepare_deadline": None, "prepare_sent": False, "done": False,
            "version": 1, "repl_acked": {},
        }
        self.coord[txn] = rec
        self.replicate_now(rec)
        return rec

    def start_commit(self, rec):
        txn = rec["txn"]
        rec["state"] = PREPARED
        rec["participants"] = sorted({self.layer.owner_ltm_of(p) for p in rec["read_set"]}
                                     | {self.layer.owner_ltm_of(p) for p in rec["write_set"]})
        rec["prepare_deadline"] = self.layer.loop.now + self.layer.prepare_timeout
        rec["version"] += 1
        self.layer.loop.emit("ltm%d" % self.id, "PREPARE %s participants=%s"
                             % (txn, ",".join(str(p) for p in rec["participants"])))
        self.replicate_now(rec)
        self._arm(0, lambda: self._drive(txn))

    def _drive(self, txn):
        """Per-transaction driver: retries every step until the record is done."""
        rec = self.coord.get(txn)
        if rec is None or rec["done"]:
            return
        if not self._may_decide(rec) and rec["decision"] is None:
            # the record's home LTM recovered before a decision was reached;
            # pre-decision driving rights return to it to keep one decider
            del self.coord[txn]
            key = ("coord", rec["home"], txn)
            if key in self.replica_store and key not in self.watching:
                self.watching.add(key)
                self._watch_coordinator(key)
            return
        self.replicate_now(rec)
        if rec["decision"] is None and rec["state"] == PREPARED:
            if self.replicated_to_alive(rec):
                if not rec["participants"]:
                    self._decide(rec, COMMIT)
                else:
                    rec["prepare_sent"] = True
                    for ltm in rec["participants"]:
                        if ltm not in rec["votes"]:
                            self._send(ltm, "PREPARE", self._prepare_payload(rec))
                    self._maybe_decide(rec)
            if (rec["decision"] is None and self._may_decide(rec)
                    and self.layer.loop.now >= rec["prepare_deadline"]):
                self.layer.loop.emit("ltm%d" % self.id, "TIMEOUT %s" % txn)
                self._decide(rec, ABORT)
        if rec["decision"] is not None and self.replicated_to_alive(rec):
            kind = "COMMIT_APPLY" if rec["decision"] == COMMIT else "ABORT_APPLY"
            for ltm in rec["participants"]:
                if ltm not in rec["acks"]:
                    self._send(ltm, kind, {
                        "txn": txn, "commit_ts": rec["commit_ts"],
                    })
            if set(rec["participants"]) <= rec["acks"]:
                rec["done"] = True
                rec["version"] += 1
                self.replicate_now(rec)
                self.layer.loop.emit("ltm%d" % self.id, "DONE %s %s" % (txn, rec["state"]))
                return
        self._arm(self.layer.retry_interval, lambda: self._drive(txn))

    def _prepare_payload(self, rec):
        # an item carries "observed" when read (snapshot validation) and
        # "value" when written (the buffered update to apply on commit)
        items = {}
        for path_str, observed in rec["read_set"].items():
            items[path_str] = {"path": rec["paths"][path_str], "observed": observed}
        for path_str, value in rec["write_set"].items():
            entry = items.setdefault(path_str, {"path": rec["paths"][path_str]})
            entry["value"] = value
        return {"txn": rec["txn"], "coordinator": rec["coordinator"], "items": items}

    def _may_decide(self, rec):
        return rec["home"] == self.id or not self.layer.net.is_alive(rec["home"])

    def _maybe_decide(self, rec):
        if rec["decision"] is not None or not self._may_decide(rec):
            return
        votes = rec["votes"]
        if any(v is False for v in votes.values()):
            self._decide(rec, ABORT)
        elif all(ltm in votes for ltm in rec["participants"]):
            self._decide(rec, COMMIT)

    def _decide(self, rec, decision):
        if rec["decision"] is not None:
            if rec["decision"] != decision:
                raise RuntimeError("conflicting decision for %s" % rec["txn"])
            return
        rec["decision"] = decision
        rec["state"] = COMMITTED if decision == COMMIT else ABORTED
        if decision == COMMIT:
            rec["commit_ts"] = self.layer.store.clock.next()
        rec["version"] += 1
        self.layer.decision_log.append((rec["txn"], decision))
        self.layer.loop.emit("ltm%d" % self.id, "DECIDE %s %s%s"
                             % (rec["txn"], decision,
                                " ts=%d" % rec["commit_ts"] if decision == COMMIT else ""))
        self.replicate_now(rec)

    def _on_vote(self, src, payload):
        rec = self.coord.get(payload["txn"])
        if rec is None:
            return
        if rec["decision"] is not None:
            # a recovered participant re-voted for a settled transaction;
            # answer with the decision so it can release its locks
            self._send_decision(src, rec)
            return
        rec["votes"][src] = payload["yes"]
        self.layer.loop.emit("ltm%d" % self.id, "VOTE %s %s from=%d"
                             % (payload["txn"], "YES" if payload["yes"] else "NO", src))
        if rec["prepare_sent"] or payload["yes"] is False:
            self._maybe_decide(rec)

    def _send_decision(self, dst, rec):
        kind = "COMMIT_APPLY" if rec["decision"] == COMMIT else "ABORT_APPLY"
        self._send(dst, kind, {"txn": rec["txn"], "commit_ts": rec["commit_ts"]})

    def _on_apply_ack(self, src, payload):
        rec = self.coord.get(payload["txn"])
        if rec is not None:
            rec["acks"].add(src)

    def _on_decision_req(self, src, payload):
        txn = payload["txn"]
        rec = self.coord.get(txn)
        if rec is None:
            for (kind, _, t), snap in self.replica_store.items():
                if kind == "coord" and t == txn and snap["decision"] is not None:
                    rec = snap
                    break
        if rec is not None and rec["decision"] is not None:
            self._send_decision(src, rec)

    def _on_status_req(self, src, payload):
        rec = self.coord.get(payload["txn"])
        if rec is not None:
            self._send(src, "STATUS_RESP", {"txn": payload["txn"], "record": _copy_record(rec)})

    def _on_status_resp(self, src, payload):
        key = ("coord", payload["record"]["home"], payload["txn"])
        mine = self.replica_store.get(key)
        if mine is not None and payload["record"]["version"] > mine["version"]:
            self.replica_store[key] = payload["record"]

    # --- replica watchdog and takeover ---

    def _watch_coordinator(self, key):
        self._arm(self.layer.takeover_patience, lambda: self._check_takeover(key))

    def _check_takeover(self, key):
        snapshot = self.replica_store.get(key)
        if snapshot is None or snapshot["done"]:
            self.watching.discard(key)
            return
        _, owner, txn = key
        if txn in self.coord:
            self.watching.discard(key)
            return  # already driving it
        if self.layer.net.is_alive(owner):
            # owner lives; nudge it for the final state so the watchdog can rest
            self._send(owner, "STATUS_REQ", {"txn": txn})
            self._watch_coordinator(key)
            return
        ring = self.layer.replica_ring(owner)
        candidates = [r for r in ring if self.layer.net.is_alive(r)]
        if not candidates or candidates[0] != self.id:
            self._watch_coordinator(key)
            return
        # adopt the record and drive it to completion; the version leap puts
        # this lineage above any stale copy still sitting on other replicas
        rec = _copy_record(snapshot)
        rec["repl_acked"] = {}
        rec["prepare_sent"] = False
        rec["version"] += 1000
        if rec["decision"] is None:
            rec["prepare_deadline"] = self.layer.loop.now + self.layer.prepare_timeout
            rec["votes"] = {}
        self.coord[txn] = rec
        self.watching.discard(key)
        self.layer.loop.emit("ltm%d" % self.id, "TAKEOVER %s from=ltm%d" % (txn, owner))
        self._arm(0, lambda: self._drive(txn))

    # --- participant side ---

    def _on_prepare(self, src, payload):
        txn = payload["txn"]
        rec = self.part.get(txn)
        if rec is not None:
            if rec["decision"] == ABORT:
                self._send(src, "VOTE", {"txn": txn, "yes": False})
            elif rec["vote_ready"]:
                self._send(src, "VOTE", {"txn": txn, "yes": True})
            else:
                rec["reply_to"] = src  # vote once replication lands
            return
        mine = {p: item for p, item in payload["items"].items()
                if self.layer.owner_ltm_of(p) == self.id}
        for path_str, item in sorted(mine.items()):
            holder = self.locks.get(path_str)
            if holder is not None and holder != txn:
                self._send(src, "VOTE", {"txn": txn, "yes": False})
                return
            if "observed" in item:
                cell = self.layer.store.get_latest(item["path"])
                current = cell.ts if cell is not None else 0
                if current != item["observed"]:
                    self._send(src, "VOTE", {"txn": txn, "yes": False})
                    return
        for path_str in mine:
            self.locks[path_str] = txn
        rec = {
            "kind": "part", "txn": txn, "coordinator": payload["coordinator"],
            "home": self.id, "items": mine, "decision": None, "applied": False,
            "vote_ready": False, "reply_to": src, "done": False,
            "version": 1, "repl_acked": {},
        }
        self.part[txn] = rec
        self._drive_part(txn)

    def _drive_part(self, txn):
        rec = self.part.get(txn)
        if rec is None or rec["done"]:
            return
        self.replicate_now(rec)
        if not rec["vote_ready"] and self.replicated_to_alive(rec):
            rec["vote_ready"] = True
            self._send(rec["reply_to"], "VOTE", {"txn": txn, "yes": True})
        elif rec["vote_ready"] and rec["decision"] is None:
            # chase the outcome: the coordinator if up, else whoever of its
            # replica ring answers; blocks (2PC does) until someone knows
            coordinator = rec["coordinator"]
            targets = [coordinator] + self.layer.replica_ring(coordinator)
            for target in targets:
                if self.layer.net.is_alive(target):
                    self._send(target, "DECISION_REQ", {"txn": txn})
                    break
        if rec["decision"] is None or not rec["applied"]:
            self._arm(self.layer.retry_interval, lambda: self._drive_part(txn))

    def _on_commit_apply(self, src, payload):
        txn = payload["txn"]
        rec = self.part.get(txn)
        if rec is not None:
            if rec["decision"] == ABORT:
                raise RuntimeError("COMMIT after ABORT at participant for %s" % txn)
            if not rec["applied"]:
                commit_ts = payload["commit_ts"]
                for path_str, item in sorted(rec["items"].items()):
                    if "value" in item:
                        self.layer.store.put(item["path"], item["value"], ts=commit_ts)
                for path_str in rec["items"]:
                    if self.locks.get(path_str) == txn:
                        del self.locks[path_str]
                rec["decision"] = COMMIT
                rec["commit_ts"] = commit_ts
                rec["applied"] = True
                rec["done"] = True
                rec["version"] += 1
                self.layer.loop.emit("ltm%d" % self.id, "APPLY %s ts=%d" % (txn, commit_ts))
                self.replicate_now(rec)
        self._send(src, "APPLY_ACK", {"txn": txn})

    def _on_abort_apply(self, src, payload):
        txn = payload["txn"]
        rec = self.part.get(txn)
        if rec is not None:
            if rec["decision"] == COMMIT:
                raise RuntimeError("ABORT after COMMIT at participant for %s" % txn)
            for path_str in rec["items"]:
                if self.locks.get(path_str) == txn:
                    del self.locks[path_str]
            rec["decision"] = ABORT
            rec["applied"] = True
            rec["done"] = True
            rec["version"] += 1
            self.replicate_now(rec)
        self._send(src, "APPLY_ACK", {"txn": txn})

    # --- crash and recovery ---

    def crash(self):
        self.incarnation += 1
        self.coord.clear()
        self.part.clear()
        self.replica_store.clear()
        self.locks.clear()
        self.watching.clear()

    def recover(self, pulled):
        """Rebuild volatile state from the records replicas returned."""
        self.incarnation += 1
        for key, snapshot in sorted(pulled.items(), key=lambda kv: str(kv[0])):
            kind, owner, txn = key
            if owner != self.id:
                # replica duty for another LTM's record
                self.replica_store[key] = _copy_record(snapshot)
                record = self.replica_store[key]
                if (kind == "coord" and not record["done"]
                        and record["state"] != ACTIVE and key not in self.watching):
                    self.watching.add(key)
                    self._watch_coordinator(key)
                continue
            rec = _copy_record(snapshot)
            rec["repl_acked"] = {}
            if kind == "coord":
                rec["prepare_sent"] = False
                rec["version"] += 1000
                if rec["decision"] is None and rec["state"] == PREPARED:
                    rec["prepare_deadline"] = self.layer.loop.now + self.layer.prepare_timeout
                    rec["votes"] = {}
                self.coord[txn] = rec
                if not rec["done"] and rec["state"] != ACTIVE:
                    self._arm(self.layer.recovery_grace, lambda t=txn: self._drive(t))
            else:
                self.part[txn] = rec
                if not rec["applied"]:
                    for path_str in rec["items"]:
                        self.locks[path_str] = txn
                    rec["vote_ready"] = False
                    rec["reply_to"] = rec["coordinator"]
                    self._arm(self.layer.recovery_grace, lambda t=txn: self._drive_part(t))

    def _on_pull_req(self, src, payload):
        # hand back everything the recovering node should hold again: its
        # own records and the copies it keeps as a replica for other LTMs
        def wants(home):
            return home == src or src in self.layer.replica_ring(home)

        records = {}
        for key, snapshot in self.replica_store.items():
            if wants(key[1]):
                records[key] = _copy_record(snapshot)
        # a takeover in progress lives in coord, not replica_store; hand the
        # freshest copy either way
        for txn, rec in self.coord.items():
            if wants(rec["home"]):
                key = ("coord", rec["home"], txn)
                cur = records.get(key)
                if cur is None or rec["version"] > cur["version"]:
                    records[key] = _copy_record(rec)
        for txn, rec in self.part.items():
            if wants(rec["home"]):
                key = ("part", rec["home"], txn)
                cur = records.get(key)
                if cur is None or rec["version"] > cur["version"]:
                    records[key] = _copy_record(rec)
        self._send(src, "PULL_RESP", {"req": payload["req"], "records": records})

    def _on_pull_resp(self, src, payload):
        self.layer._pull_responses.setdefault(payload["req"], []).append(payload["records"])


class TransactionLayer:
    """Client facade owning the LTM ring, its network and the event loop."""

    def __init__(self, store, ltm_count=4, replica_count=2, seed=0,
                 prepare_timeout=10, retry_interval=3, takeover_patience=15,
                 recovery_grace=6):
        if replica_count >= ltm_count:
            replica_count = ltm_count - 1
        self.store = store
        self.ltm_count = ltm_count
        self.replica_count = replica_count
        self.prepare_timeout = prepare_timeout
        self.retry_interval = retry_interval
        self.takeover_patience = takeover_patience
        self.recovery_grace = recovery_grace
        self.loop = EventLoop(seed)
        self.net = Network(self.loop)
        self.ltms = [LtmNode(i, self) for i in range(ltm_count)]
        for ltm in self.ltms:
            self.net.register(ltm.id, ltm.handle)
        self._next_seq = [0] * ltm_count
        self._coordinator_of = {}
        self.decision_log = []
        self._pull_responses = {}
        self._next_pull = 0

    # --- placement ---

    def owner_ltm_of(self, path_str):
        return stable_hash(path_str) % self.ltm_count

    def replica_ring(self, ltm_id):
        return [(ltm_id + i) % self.ltm_count for i in range(1, self.replica_count + 1)]

    # --- client operations ---

    def begin(self, coordinator):
        self._check_up(coordinator)
        self._next_seq[coordinator] += 1
        txn = TxnId(self._next_seq[coordinator], coordinator)
        node = self.ltms[coordinator]
        rec = node.begin_txn(txn)
        self._coordinator_of[txn] = coordinator
        self.loop.emit("ltm%d" % coordinator, "BEGIN %s" % txn)
        self._sync_replication(node, rec)
        return txn

    def t_read(self, txn, path):
        rec, node = self._active_record(txn)
        path_str = str(path)
        if path_str in rec["write_set"]:
            return Cell(rec["write_set"][path_str], UNSET_TS)
        cell = self.store.get_latest(path)
        if path_str not in rec["read_set"]:
            # first observation is the snapshot that prepare validates against
            rec["read_set"][path_str] = cell.ts if cell is not None else 0
            rec["paths"][path_str] = path
            rec["version"] += 1
            node.replicate_now(rec)
            self._sync_replication(node, rec)
        return cell

    def t_write(self, txn, path, value):
        rec, node = self._active_record(txn)
        path_str = str(path)
        rec["write_set"][path_str] = bytes(value)
        rec["paths"][path_str] = path
        rec["version"] += 1
        node.replicate_now(rec)
        self._sync_replication(node, rec)

    def commit_async(self, txn):
        rec, node = self._active_record(txn)
        node.start_commit(rec)

    def abort(self, txn):
        """Abandon an active transaction; buffered writes are discarded."""
        rec, node = self._active_record(txn)
        rec["state"] = ABORTED
        rec["decision"] = ABORT
        rec["done"] = True
        rec["version"] += 1
        self.decision_log.append((txn, ABORT))
        self.loop.emit("ltm%d" % node.id, "ABORT %s" % txn)
        node.replicate_now(rec)
        self._sync_replication(node, rec)
        return ABORTED

    def commit(self, txn, max_ticks=400):
        """Synchronous commit; returns COMMITTED or ABORTED.

        Returns once the decision is durable and every reachable
        participant has applied it; a crashed participant finishes its
        share when it recovers.
        """
        self.commit_async(txn)
        coordinator = self._coordinator_of[txn]

        def finished():
            if not self.net.is_alive(coordinator):
                return True
            rec = self.ltms[coordinator].coord.get(txn)
            if rec is None:
                return False
            if rec["done"]:
                return True
            if rec["decision"] is not None:
                pending = [p for p in rec["participants"] if p not in rec["acks"]]
                return bool(pending) and all(not self.net.is_alive(p) for p in pending)
            return False

        self.loop.run_until(finished, max_ticks=max_ticks)
        if not self.net.is_alive(coordinator):
            raise LtmDown("coordinator %d crashed during commit of %s" % (coordinator, txn))
        rec = self.ltms[coordinator].coord.get(txn)
        if rec is None or rec["decision"] is None:
            raise Unavailable("commit of %s did not finish in %d ticks" % (txn, max_ticks))
        return rec["state"]

    def consistent_read(self, path):
        """Read the latest committed cell straight from storage, skipping LTMs."""
        return self.store.get_latest(path)

    # --- failure injection ---

    def crash_ltm(self, ltm_id):
        self.loop.emit("ltm%d" % ltm_id, "CRASH")
        self.net.set_alive(ltm_id, False)
        self.ltms[ltm_id].crash()

    def recover_ltm(self, ltm_id, max_ticks=100):
        self.net.set_alive(ltm_id, True)
        self.loop.emit("ltm%d" % ltm_id, "RECOVER")
        node = self.ltms[ltm_id]
        node.incarnation += 1
        self._next_pull += 1
        req = self._next_pull
        peers = [r for r in self.replica_ring(ltm_id) if self.net.is_alive(r)]
        for peer in peers:
            self.net.send(ltm_id, peer, "PULL_REQ", {"req": req})
        self.loop.run_until(lambda: len(self._pull_responses.get(req, [])) >= len(peers),
                            max_ticks=max_ticks)
        merged = {}
        for records in self._pull_responses.pop(req, []):
            for key, snapshot in records.items():
                mine = merged.get(key)
                if mine is None or snapshot["version"] > mine["version"]:
                    merged[key] = snapshot
        node.recover(merged)

    # --- inspection ---

    def outcome(self, txn):
        """Final state of a transaction as recorded anywhere in the ring."""
        best = None
        for node in self.ltms:
            candidates = []
            rec = node.coord.get(txn)
            if rec is not None:
                candidates.append(rec)
            for (kind, _, t), snapshot in node.replica_store.items():
                if kind == "coord" and t == txn:
                    candidates.append(snapshot)
            for rec in candidates:
                if best is None or rec["version"] > best["version"]:
                    best = rec
        if best is None:
            return None
        return best["state"]

    def committed_transactions(self):
        """[(commit_ts, txn, write_set, paths)] deduped, commit order."""
        seen = {}
        for node in self.ltms:
            sources = list(node.coord.values()) + [
                snap for (kind, _, _), snap in node.replica_store.items() if kind == "coord"
            ]
            for rec in sources:
                if rec["decision"] == COMMIT:
                    cur = seen.get(rec["txn"])
                    if cur is None or rec["version"] > cur["version"]:
                        seen[rec["txn"]] = rec
        out = [(rec["commit_ts"], rec["txn"], dict(rec["write_set"]), dict(rec["paths"]))
               for rec in seen.values()]
        out.sort(key=lambda item: (item[0], item[1]))
        return out

    def run_until_quiet(self, max_events=2_000_000):
        return self.loop.run_until_idle(max_events=max_events)

    # --- internals ---

    def _check_up(self, ltm_id):
        if not self.net.is_alive(ltm_id):
            raise LtmDown("ltm %d is down" % ltm_id)

    def _active_record(self, txn):
        coordinator = self._coordinator_of.get(txn)
        if coordinator is None:
            raise TxnNotActive("unknown transaction %s" % txn)
        self._check_up(coordinator)
        rec = self.ltms[coordinator].coord.get(txn)
        if rec is None or rec["state"] != ACTIVE:
            raise TxnNotActive(str(txn))
        return rec, self.ltms[coordinator]

    def _sync_replication(self, node, rec, max_ticks=60):
        ok = self.loop.run_until(lambda: node.replicated_to_alive(rec), max_ticks=max_ticks)
        if not ok:
            raise Unavailable("replica set of ltm %d unreachable" % node.id)


def run_txn_script(store, lines, ltm_count=4, replica_count=2, seed=0, drain_ticks=200):
    """Execute a BEGIN/READ/WRITE/COMMIT/CRASH/RECOVER/TICK script.

    One event line per executed statement, deterministic for a fixed
    (seed, script) pair. Paths are table/row/family[/super]/column; the
    harness creates tables and families on first use so scripts stay
    self-contained.
    """
    from .storage import parse_path

    layer = TransactionLayer(store, ltm_count=ltm_count,
                             replica_count=replica_count, seed=seed)
    events = []
    current = None
    next_coord = 0

    def ensure_schema(path):
        if not store.has_table(path.table):
            store.create_table(path.table, [(path.family, path.super_key is not None)])
        else:
            store.ensure_family(path.table, path.family, path.super_key is not None)

    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        op = parts[0].upper()
        try:
            if op == "BEGIN":
                coordinator = int(parts[1]) if len(parts) > 1 else next_coord % ltm_count
                next_coord += 1
                current = layer.begin(coordinator)
                events.append("BEGIN %s ltm%d" % (current, coordinator))
            elif op == "READ":
                path = parse_path(parts[1])
                ensure_schema(path)
                cell = layer.t_read(current, path)
                shown = cell.value.decode("utf-8", "backslashreplace") if cell else "ABSENT"
                events.append("READ %s -> %s" % (parts[1], shown))
            elif op == "WRITE":
                path = parse_path(parts[1])
                ensure_schema(path)
                layer.t_write(current, path, " ".join(parts[2:]).encode("utf-8"))
                events.append("WRITE %s OK" % parts[1])
            elif op == "COMMIT":
                outcome = layer.commit(current)
                events.append("COMMIT %s -> %s" % (current, outcome))
                current = None
            elif op == "CRASH":
                layer.crash_ltm(int(parts[1]))
                events.append("CRASH ltm%s" % parts[1])
            elif op == "RECOVER":
                layer.recover_ltm(int(parts[1]))
                events.append("RECOVER ltm%s" % parts[1])
            elif op == "TICK":
                layer.loop.run_for(int(parts[1]))
                events.append("TICK %s" % parts[1])
            else:
                raise ValueError("unknown txn script op: %r" % raw)
        except (LtmDown, TxnNotActive, Unavailable) as exc:
            events.append("%s -> ERROR %s" % (op, type(exc).__name__))
            if op in ("COMMIT",):
                current = None
    layer.loop.run_for(drain_ticks)
    return layer, events
