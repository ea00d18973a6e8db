"""Master/worker job execution over column store data.

The master scans the input table, partitions the rows into M contiguous
splits and hands them to workers over the simulated network; workers run
a registered map function and send the intermediate pairs back, where
the reduce step combines them per key. Failed workers get their running
splits re-dispatched, and the master keys every result by (split,
attempt) so a split contributes exactly once however often it ran.

Jobs name pre-registered pure functions instead of shipping code, which
keeps them data: word counting, newest-stamp search, and counting
matches of a template byte string in cell values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import JobFailed, UnknownFunction, ZeroSplits
from .sim import EventLoop, Network

PENDING = "Pending"
RUNNING = "Running"
DONE = "Done"

MAPPING = "Mapping"
REDUCING = "Reducing"
COMPLETE = "Complete"
FAILED = "Failed"


# --- registered functions ---
# map fn: (row_key, cells, params) -> [(k, v)]; cells are
# (family, super_key, column, value, ts) tuples for the row's live data.
# reduce fn: (key, values, params) -> value, insensitive to value order.

def _map_word_count(row_key, cells, params):
    pairs = []
    for _, _, _, value, _ in cells:
        for word in value.decode("utf-8", "replace").split():
            pairs.append((word, 1))
    return pairs


def _map_max_ts(row_key, cells, params):
    return [("max_ts", ts) for _, _, _, _, ts in cells]


def _map_match_count(row_key, cells, params):
    template = params["template"]
    if isinstance(template, str):
        template = template.encode("utf-8")
    if not template:
        raise ValueError("match template must be non-empty")
    return [("matches", value.count(template)) for _, _, _, value, _ in cells]


def _reduce_sum(key, values, params):
    return sum(values)


def _reduce_max(key, values, params):
    return max(values)


class FunctionRegistry:
    def __init__(self):
        self.map_fns = {}
        self.reduce_fns = {}

    def register_map(self, name, fn):
        self.map_fns[name] = fn

    def register_reduce(self, name, fn):
        self.reduce_fns[name] = fn

    def map_fn(self, name):
        if name not in self.map_fns:
            raise UnknownFunction("map function %r" % name)
        return self.map_fns[name]

    def reduce_fn(self, name):
        if name not in self.reduce_fns:
            raise UnknownFunction("reduce function %r" % name)
        return self.reduce_fns[name]


def default_registry():
    reg = FunctionRegistry()
    reg.register_map("wordcount", _map_word_count)
    reg.register_map("maxts", _map_max_ts)
    reg.register_map("matchcount", _map_match_count)
    reg.register_reduce("sum", _reduce_sum)
    reg.register_reduce("max", _reduce_max)
    return reg


@dataclass
class JobSpec:
    table: str
    map_fn: str
    reduce_fn: str
    splits: int
    params: dict = field(default_factory=dict)
    start_row: bytes = b""
    end_row: bytes | None = None


@dataclass
class SplitState:
    index: int
    rows: list
    state: str = PENDING
    worker: int | None = None
    attempt: int = 0
    result: list | None = None


@dataclass
class JobState:
    job_id: int
    spec: JobSpec
    splits: list
    phase: str = MAPPING
    result: dict | None = None
    failure: str | None = None

    def split_states(self):
        return [s.state for s in self.splits]


class _Worker:
    def __init__(self, worker_id, engine):
        self.id = worker_id
        self.engine = engine

    def handle(self, src, kind, payload):
        if kind != "MAP_SPLIT":
            return
        fn = self.engine.registry.map_fn(payload["map_fn"])
        pairs = []
        for row_key, cells in payload["rows"]:
            pairs.extend(fn(row_key, cells, payload["params"]))
        self.engine.loop.emit("w%d" % self.id, "MAPPED job=%d split=%d pairs=%d"
                              % (payload["job"], payload["split"], len(pairs)))
        self.engine.net.send(self.id, self.engine.MASTER, "SPLIT_DONE", {
            "job": payload["job"], "split": payload["split"],
            "attempt": payload["attempt"], "pairs": pairs,
        })


class MapReduceEngine:
    """One master plus a fixed pool of workers on a seeded event loop."""

    MASTER = -1

    def __init__(self, store, workers=4, seed=0, retry_budget=3, registry=None):
        self.store = store
        self.registry = registry if registry is not None else default_registry()
        self.retry_budget = retry_budget
        self.loop = EventLoop(seed)
        self.net = Network(self.loop)
        self.net.register(self.MASTER, self._master_handle)
        self.workers = [_Worker(i, self) for i in range(workers)]
        for worker in self.workers:
            self.net.register(worker.id, worker.handle)
        self.jobs = {}
        self._next_job = 0

    # --- operations ---

    def submit(self, spec):
        """Partition the input and dispatch; returns the job id."""
        if spec.splits < 1:
            raise ZeroSplits(str(spec.splits))
        self.registry.map_fn(spec.map_fn)
        self.registry.reduce_fn(spec.reduce_fn)
        rows = self._scan_rows(spec)
        self._next_job += 1
        job_id = self._next_job
        splits = [SplitState(i, chunk) for i, chunk in enumerate(_partition(rows, spec.splits))]
        job = JobState(job_id, spec, splits)
        self.jobs[job_id] = job
        self.loop.emit("master", "SUBMIT job=%d rows=%d splits=%d"
                       % (job_id, len(rows), len(splits)))
        self._dispatch(job)
        self._arm_driver(job_id)
        return job_id

    def wait(self, job_id, max_ticks=10_000):
        """Block in simulated time until the job finishes; the result map."""
        job = self.jobs[job_id]
        self.loop.run_until(lambda: job.phase in (COMPLETE, FAILED), max_ticks=max_ticks)
        if job.phase != COMPLETE:
            raise JobFailed(job.failure or "job %d did not finish" % job_id)
        return dict(job.result)

    def fail_worker(self, worker_id):
        """Kill a worker; its running splits go back to pending."""
        self.net.set_alive(worker_id, False)
        self.loop.emit("master", "WORKER_FAILED %d" % worker_id)
        for job in self.jobs.values():
            if job.phase != MAPPING:
                continue
            for split in job.splits:
                if split.state == RUNNING and split.worker == worker_id:
                    split.state = PENDING
                    split.worker = None
            self._dispatch(job)

    def job_state(self, job_id):
        return self.jobs[job_id]

    # --- master internals ---

    def _scan_rows(self, spec):
        rows = []
        for row_key, cells in self.store.scan(spec.table, start_row=spec.start_row,
                                              end_row=spec.end_row):
            flat = [(fam, sup, col, cell.value, cell.ts) for fam, sup, col, cell in cells]
            rows.append((row_key, flat))
        return rows

    def _alive_workers(self):
        return [w.id for w in self.workers if self.net.is_alive(w.id)]

    def _dispatch(self, job):
        alive = self._alive_workers()
        if not alive:
            if job.phase == MAPPING:
                job.phase = FAILED
                job.failure = "no workers left"
                self.loop.emit("master", "JOB_FAILED job=%d %s" % (job.job_id, job.failure))
            return
        cursor = 0
        for split in job.splits:
            if split.state != PENDING:
                continue
            if split.attempt > self.retry_budget:
                job.phase = FAILED
                job.failure = "split %d exceeded retry budget" % split.index
                self.loop.emit("master", "JOB_FAILED job=%d %s" % (job.job_id, job.failure))
                return
            worker = alive[cursor % len(alive)]
            cursor += 1
            split.state = RUNNING
            split.worker = worker
            split.attempt += 1
            self.loop.emit("master", "DISPATCH job=%d split=%d worker=%d attempt=%d"
                           % (job.job_id, split.index, worker, split.attempt))
            self.net.send(self.MASTER, worker, "MAP_SPLIT", {
                "job": job.job_id, "split": split.index, "attempt": split.attempt,
                "rows": split.rows, "map_fn": job.spec.map_fn, "params": job.spec.params,
            })

    def _master_handle(self, src, kind, payload):
        if kind != "SPLIT_DONE":
            return
        job = self.jobs.get(payload["job"])
        if job is None or job.phase != MAPPING:
            return
        split = job.splits[payload["split"]]
        # exactly-once contribution: stale attempts and re-deliveries are dropped
        if split.state != RUNNING or split.worker != src or split.attempt != payload["attempt"]:
            return
        split.state = DONE
        split.result = payload["pairs"]
        if all(s.state == DONE for s in job.splits):
            self._reduce(job)

    def _reduce(self, job):
        job.phase = REDUCING
        grouped = {}
        for split in job.splits:  # split order keeps values in row order
            for key, value in split.result:
                grouped.setdefault(key, []).append(value)
        reduce_fn = self.registry.reduce_fn(job.spec.reduce_fn)
        job.result = {key: reduce_fn(key, values, job.spec.params)
                      for key, values in grouped.items()}
        job.phase = COMPLETE
        self.loop.emit("master", "COMPLETE job=%d keys=%d" % (job.job_id, len(job.result)))

    def _arm_driver(self, job_id):
        def drive():
            job = self.jobs.get(job_id)
            if job is None or job.phase in (COMPLETE, FAILED):
                return
            # running splits on dead workers revert to pending
            for split in job.splits:
                if split.state == RUNNING and not self.net.is_alive(split.worker):
                    split.state = PENDING
                    split.worker = None
            if job.phase == MAPPING:
                self._dispatch(job)
            if job.phase not in (COMPLETE, FAILED):
                self.loop.after(5, drive)

        self.loop.after(5, drive)


def _partition(rows, m):
    """M contiguous chunks preserving order; sizes differ by at most one."""
    base, extra = divmod(len(rows), m)
    chunks = []
    start = 0
    for i in range(m):
        size = base + (1 if i < extra else 0)
        chunks.append(rows[start:start + size])
        start += size
    return chunks


def sequential_fold(store, spec, registry=None):
    """Oracle: run the job in plain row order with no cluster at all."""
    registry = registry if registry is not None else default_registry()
    map_fn = registry.map_fn(spec.map_fn)
    reduce_fn = registry.reduce_fn(spec.reduce_fn)
    grouped = {}
    for row_key, cells in store.scan(spec.table, start_row=spec.start_row,
                                     end_row=spec.end_row):
        flat = [(fam, sup, col, cell.value, cell.ts) for fam, sup, col, cell in cells]
        for key, value in map_fn(row_key, flat, spec.params):
            grouped.setdefault(key, []).append(value)
    return {key: reduce_fn(key, values, spec.params) for key, values in grouped.items()}
