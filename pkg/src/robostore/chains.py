"""Chained instruction storage and execution over the column store.

Each instruction addresses its successor, so a task is retrieved by
following links from a registered head instead of shipping the whole
program at once. Instructions live in ordinary column families, one
family per body part, which means versioning and garbage collection
apply to them like to any other data. A query can carry a second search
key: when the execution context holds a value equal to an instruction's
branch key, the walk follows the branch link instead of the plain one.

Joint positions are quantized to ten fuzzy states spanning [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (
    BrokenLink,
    CycleDetected,
    DanglingLink,
    EmptyChain,
    OutOfRange,
    UnknownTask,
)
from .storage import ColumnPath

FUZZY_LEVELS = 10

# default for InstructionSpec.next: link to the following list element
AUTO = "@auto"

_META_FAMILY = "meta"
_HEAD_COLUMN = "head"


@dataclass(frozen=True)
class FuzzyState:
    """One of ten joint positions; as_real spans [0, 1] inclusive."""

    level: int

    def __post_init__(self):
        if not 0 <= self.level <= FUZZY_LEVELS - 1:
            raise OutOfRange("fuzzy level %r outside 0..9" % (self.level,))

    @property
    def as_real(self):
        return self.level / (FUZZY_LEVELS - 1)


def quantize(x):
    """Nearest of the ten levels; exact midpoints round up."""
    if not 0.0 <= x <= 1.0:
        raise OutOfRange("joint position %r outside [0, 1]" % (x,))
    level = int((FUZZY_LEVELS - 1) * x + 0.5)
    return FuzzyState(min(level, FUZZY_LEVELS - 1))


@dataclass
class InstructionSpec:
    """One instruction as submitted to store_chain.

    next defaults to the following list element (AUTO); None terminates
    the chain early. branch_next must come with branch_key and may point
    at any list member or previously stored instruction.
    """

    id: str
    part: str
    action: str
    state: FuzzyState
    next: str | None = AUTO
    branch_key: bytes | None = None
    branch_next: str | None = None


@dataclass(frozen=True)
class Instruction:
    id: str
    part: str
    action: str
    state: FuzzyState
    next: str | None
    branch_key: bytes | None
    branch_next: str | None


@dataclass(frozen=True)
class ExecStep:
    instruction_id: str
    action: str
    state: FuzzyState
    branched: bool


class ChainStore:
    """Stores instruction chains in one table, one family per body part."""

    def __init__(self, store, table="instructions"):
        self.store = store
        self.table = table
        if not store.has_table(table):
            store.create_table(table, [(_META_FAMILY, False)])
        self._heads = {}

    # --- storing ---

    def store_chain(self, task, instructions):
        """Validate and persist a chain; returns the head instruction id."""
        if not instructions:
            raise EmptyChain(task)
        specs = list(instructions)
        new_ids = [s.id for s in specs]
        if len(set(new_ids)) != len(new_ids):
            raise ValueError("duplicate instruction ids in chain %r" % task)

        resolved = []
        for i, spec in enumerate(specs):
            nxt = spec.next
            if nxt == AUTO:
                nxt = new_ids[i + 1] if i + 1 < len(specs) else None
            if (spec.branch_key is None) != (spec.branch_next is None):
                raise ValueError("branch_key and branch_next must come together (%s)" % spec.id)
            resolved.append(Instruction(spec.id, spec.part, spec.action, spec.state,
                                        nxt, spec.branch_key, spec.branch_next))

        known = set(new_ids)
        for ins in resolved:
            for target in (ins.next, ins.branch_next):
                if target is None or target in known:
                    continue
                if self._read_instruction(target) is None:
                    raise DanglingLink("%s -> %s" % (ins.id, target))

        self._check_acyclic(resolved)

        for ins in resolved:
            self.store.ensure_family(self.table, ins.part)
            self._write_instruction(ins)
        head = resolved[0].id
        self._heads[task] = head
        head_path = ColumnPath(self.table, b"task:" + task.encode("utf-8"),
                               _META_FAMILY, _HEAD_COLUMN)
        self.store.put(head_path, head.encode("utf-8"))
        return head

    def _check_acyclic(self, resolved):
        # previously stored instructions never link back into new ids, so
        # any cycle must close inside the submitted list
        edges = {}
        new_ids = {ins.id for ins in resolved}
        for ins in resolved:
            edges[ins.id] = [t for t in (ins.next, ins.branch_next)
                             if t is not None and t in new_ids]
        state = {}
        for root in edges:
            stack = [(root, iter(edges[root]))]
            if state.get(root) == "done":
                continue
            state[root] = "open"
            while stack:
                nid, it = stack[-1]
                advanced = False
                for target in it:
                    mark = state.get(target)
                    if mark == "open":
                        raise CycleDetected("%s -> %s" % (nid, target))
                    if mark is None:
                        state[target] = "open"
                        stack.append((target, iter(edges[target])))
                        advanced = True
                        break
                if not advanced:
                    state[nid] = "done"
                    stack.pop()

    def _write_instruction(self, ins):
        row = ins.id.encode("utf-8")
        columns = {
            "action": ins.action.encode("utf-8"),
            "state": str(ins.state.level).encode("ascii"),
        }
        if ins.next is not None:
            columns["next"] = ins.next.encode("utf-8")
        if ins.branch_key is not None:
            columns["branch_key"] = ins.branch_key
            columns["branch_next"] = ins.branch_next.encode("utf-8")
        for column, value in columns.items():
            self.store.put(ColumnPath(self.table, row, ins.part, column), value)

    # --- reading ---

    def head_of(self, task):
        head = self._heads.get(task)
        if head is None:
            head_path = ColumnPath(self.table, b"task:" + task.encode("utf-8"),
                                   _META_FAMILY, _HEAD_COLUMN)
            cell = self.store.get_latest(head_path)
            if cell is None:
                raise UnknownTask(task)
            head = cell.value.decode("utf-8")
            self._heads[task] = head
        return head

    def tasks(self):
        rows = self.store.scan(self.table, family=_META_FAMILY, column=_HEAD_COLUMN)
        return sorted(r[0].decode("utf-8").removeprefix("task:") for r in rows)

    def _read_instruction(self, ins_id):
        row = ins_id.encode("utf-8")
        found = self.store.scan(self.table, start_row=row, end_row=row + b"\x00")
        if not found:
            return None
        _, cells = found[0]
        by_col = {}
        part = None
        for fam, _, col, cell in cells:
            if fam == _META_FAMILY:
                continue
            part = fam
            by_col[col] = cell.value
        if part is None or "action" not in by_col:
            return None
        return Instruction(
            ins_id,
            part,
            by_col["action"].decode("utf-8"),
            FuzzyState(int(by_col["state"])),
            by_col["next"].decode("utf-8") if "next" in by_col else None,
            by_col.get("branch_key"),
            by_col["branch_next"].decode("utf-8") if "branch_next" in by_col else None,
        )

    def instruction(self, ins_id):
        ins = self._read_instruction(ins_id)
        if ins is None:
            raise BrokenLink(ins_id)
        return ins

    def stored_count(self):
        rows = self.store.scan(self.table)
        return sum(1 for row, _ in rows if not row.startswith(b"task:"))

    # --- execution ---

    def load_doc(self, doc):
        """Store every task chain from a parsed chain document.

        Shape: {"tasks": {name: [{"id", "part", "action", "level",
        "next"?, "branch_key"?, "branch_next"?}, ...]}}. A missing "next"
        links to the following list element; null ends the chain there.
        """
        for task in sorted(doc.get("tasks", {})):
            specs = []
            for item in doc["tasks"][task]:
                specs.append(InstructionSpec(
                    item["id"], item["part"], item["action"],
                    FuzzyState(int(item["level"])),
                    next=item.get("next", AUTO),
                    branch_key=item["branch_key"].encode("utf-8") if item.get("branch_key") else None,
                    branch_next=item.get("branch_next"),
                ))
            self.store_chain(task, specs)
        return self.tasks()

    def execute(self, task, context=None):
        """Walk a task's chain and return the ordered execution trace."""
        context = context or {}
        values = set(context.values())
        current = self.head_of(task)
        trace = []
        budget = self.stored_count() + 1
        while current is not None:
            if len(trace) >= budget:
                raise CycleDetected("walk exceeded stored instruction count at %s" % current)
            ins = self.instruction(current)
            branched = ins.branch_key is not None and ins.branch_key in values
            trace.append(ExecStep(ins.id, ins.action, ins.state, branched))
            current = ins.branch_next if branched else ins.next
        return trace
