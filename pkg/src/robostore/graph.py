"""Property graph with traversal, provenance queries and path planning.

Nodes carry a property map plus a non-negative weight (the obstacle /
traversal cost of entering them); relationships carry a type, properties
and a non-negative length. The planner treats relationships as
bidirectional (motion graphs are undirected) while traverse follows
direction unless told otherwise.

Path cost = sum of relationship lengths + sum of node weights of every
node on the path except the start, so weights act as entry penalties and
start == goal costs 0. Among equal-cost paths the planner returns the
one with the lexicographically smallest node-id sequence (relationship
ids break remaining ties), which makes Dijkstra and A* comparable
path-for-path.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .errors import UnknownElement, UnknownProperty

# sentinels for dict-shaped provenance predicates
BOUND = object()  # substitute the value bound from the first query
ANY = object()    # property must exist, any value


class Node:
    __slots__ = ("id", "properties", "weight")

    def __init__(self, node_id, weight=0.0):
        self.id = node_id
        self.properties = {}
        self.weight = weight

    def set_property(self, name, value):
        self.properties[name] = _as_bytes(value)

    def get_property(self, name):
        return self.properties.get(name)

    def __repr__(self):
        return "Node(%d)" % self.id


class Relationship:
    __slots__ = ("id", "from_id", "to_id", "rel_type", "properties", "length")

    def __init__(self, rel_id, from_id, to_id, rel_type, length=1.0):
        self.id = rel_id
        self.from_id = from_id
        self.to_id = to_id
        self.rel_type = rel_type
        self.properties = {}
        self.length = length

    def set_property(self, name, value):
        self.properties[name] = _as_bytes(value)

    def get_property(self, name):
        return self.properties.get(name)

    def __repr__(self):
        return "Relationship(%d: %d-%s->%d)" % (self.id, self.from_id, self.rel_type, self.to_id)


@dataclass
class Path:
    nodes: list
    relationships: list
    cost: float


@dataclass
class SearchStats:
    algorithm: str
    expansions: int = 0


def _as_bytes(value):
    if isinstance(value, bytes):
        return value
    if isinstance(value, str):
        return value.encode("utf-8")
    raise TypeError("property values are byte strings, got %r" % type(value))


class PropertyGraph:
    def __init__(self):
        self._nodes = {}
        self._rels = {}
        self._next_node = 0
        self._next_rel = 0
        # adjacency: node id -> list of (other id, rel id, outgoing?)
        self._adj = {}
        self.last_search = None

    # --- construction ---

    def create_node(self, weight=0.0):
        if weight < 0:
            raise ValueError("node weight must be non-negative")
        node = Node(self._next_node, float(weight))
        self._nodes[node.id] = node
        self._adj[node.id] = []
        self._next_node += 1
        return node

    def create_relationship(self, from_node, to_node, rel_type, length=1.0):
        a, b = self._node_id(from_node), self._node_id(to_node)
        if length < 0:
            raise ValueError("relationship length must be non-negative")
        rel = Relationship(self._next_rel, a, b, rel_type, float(length))
        self._rels[rel.id] = rel
        self._adj[a].append((b, rel.id, True))
        self._adj[b].append((a, rel.id, False))
        self._next_rel += 1
        return rel

    def set_node_weight(self, node, weight):
        if weight < 0:
            raise ValueError("node weight must be non-negative")
        self.node(self._node_id(node)).weight = float(weight)

    # --- element access ---

    def node(self, node_id):
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownElement("node %r" % node_id) from None

    def relationship(self, rel_id):
        try:
            return self._rels[rel_id]
        except KeyError:
            raise UnknownElement("relationship %r" % rel_id) from None

    def set_property(self, element, name, value):
        self._element(element).set_property(name, value)

    def get_property(self, element, name):
        return self._element(element).get_property(name)

    def node_ids(self):
        return sorted(self._nodes)

    def _element(self, element):
        if isinstance(element, (Node, Relationship)):
            return element
        return self.node(element)

    def _node_id(self, node):
        if isinstance(node, Node):
            node = node.id
        self.node(node)
        return node

    # --- traversal ---

    def traverse(self, start, rel_type=None, max_depth=1, directed=True, include_start=True):
        """BFS over matching relationships up to max_depth edges away."""
        start = self._node_id(start)
        seen = {start}
        frontier = [start]
        depth = 0
        while frontier and depth < max_depth:
            nxt = []
            for nid in frontier:
                for other, rel_id, outgoing in self._adj[nid]:
                    if directed and not outgoing:
                        continue
                    if rel_type is not None and self._rels[rel_id].rel_type != rel_type:
                        continue
                    if other not in seen:
                        seen.add(other)
                        nxt.append(other)
            frontier = nxt
            depth += 1
        if not include_start:
            seen.discard(start)
        return seen

    # --- shortest paths ---

    def shortest_path(self, start, goal, algorithm="dijkstra", heuristic=None):
        """Minimal-cost path between two nodes, or None when unreachable.

        algorithm is "dijkstra" or "astar"; the A* heuristic is a callable
        h(node_id, goal_id) -> float the caller promises never
        overestimates the true remaining cost. Expansion counts of the
        last run are kept in self.last_search.
        """
        start = self._node_id(start)
        goal = self._node_id(goal)
        if algorithm not in ("dijkstra", "astar"):
            raise ValueError("unknown algorithm %r" % algorithm)
        if algorithm == "dijkstra":
            heuristic = None
        elif heuristic is None:
            heuristic = lambda n, g: 0.0

        if start == goal:
            self.last_search = SearchStats(algorithm, 0)
            return Path([start], [], 0.0)

        best_cost, expansions = self._search_cost(start, goal, heuristic)
        self.last_search = SearchStats(algorithm, expansions)
        if best_cost is None:
            return None
        nodes, rels = self._lex_min_path(start, goal, best_cost)
        return Path(nodes, rels, self.path_cost(nodes, rels))

    def path_cost(self, nodes, rels):
        """Recompute the cost of an explicit path (entry-penalty model)."""
        cost = sum(self._rels[r].length for r in rels)
        cost += sum(self._nodes[n].weight for n in nodes[1:])
        return cost

    def _step_cost(self, rel_id, into):
        return self._rels[rel_id].length + self._nodes[into].weight

    def _search_cost(self, start, goal, heuristic):
        """Best-first search for the optimal cost (planner is undirected).

        With heuristic=None this is plain Dijkstra; otherwise A* with
        re-expansion on strictly better g, which stays optimal for any
        admissible (not necessarily consistent) heuristic.
        """
        h = heuristic if heuristic is not None else (lambda n, g: 0.0)
        dist = {start: 0.0}
        heap = [(h(start, goal), start, 0.0)]
        expanded = set()
        expansions = 0
        while heap:
            f, nid, g = heapq.heappop(heap)
            if g > dist.get(nid, float("inf")):
                continue
            if nid == goal:
                return g, expansions
            if nid not in expanded:
                expansions += 1
                expanded.add(nid)
            for other, rel_id, _ in self._adj[nid]:
                ng = g + self._step_cost(rel_id, other)
                if ng < dist.get(other, float("inf")) - 1e-12:
                    dist[other] = ng
                    heapq.heappush(heap, (ng + h(other, goal), other, ng))
        return None, expansions

    def _goal_bounds(self, goal):
        """Lower bound on remaining cost to goal from every node."""
        bound = {goal: 0.0}
        heap = [(0.0, goal)]
        while heap:
            d, nid = heapq.heappop(heap)
            if d > bound.get(nid, float("inf")):
                continue
            for other, rel_id, _ in self._adj[nid]:
                # walking other -> nid costs length + weight of nid's side node
                nd = d + self._rels[rel_id].length + self._nodes[nid].weight
                if nd < bound.get(other, float("inf")) - 1e-12:
                    bound[other] = nd
                    heapq.heappush(heap, (nd, other))
        return bound

    def _lex_min_path(self, start, goal, budget):
        """First simple path of cost == budget in lexicographic node order.

        Depth-first over cost-feasible prefixes, visiting neighbours in
        (node id, rel id) order; admissible goal bounds prune branches
        that cannot finish within the optimal budget, so the first
        complete path found is the canonical tie-break winner.
        """
        bound = self._goal_bounds(goal)
        eps = 1e-9
        nodes = [start]
        rels = []
        on_path = {start}

        def extend(nid, g):
            if nid == goal:
                return True
            steps = sorted(self._adj[nid], key=lambda item: (item[0], item[1]))
            for other, rel_id, _ in steps:
                if other in on_path:
                    continue
                ng = g + self._step_cost(rel_id, other)
                if ng + bound.get(other, float("inf")) > budget + eps:
                    continue
                nodes.append(other)
                rels.append(rel_id)
                on_path.add(other)
                if extend(other, ng):
                    return True
                nodes.pop()
                rels.pop()
                on_path.discard(other)
            return False

        found = extend(start, 0.0)
        assert found, "no path within budget; search and bounds disagree"
        return nodes, rels

    # --- provenance queries ---

    def provenance_query(self, q1, binder, q2):
        """Answer a second query from the results of a first.

        q1 picks nodes (dict of property equalities, or a callable);
        binder names the property whose value each q1 hit contributes;
        q2 is evaluated, with that value bound, only against nodes
        reachable (any depth, following direction) from the q1 hits.
        q2 is a dict whose values may be literals, BOUND or ANY, or a
        callable f(node, bound_value) -> bool.
        """
        results1 = [n for n in self.node_ids() if self._match(q1, self._nodes[n], None)]
        results2 = set()
        for nid in results1:
            node = self._nodes[nid]
            if binder not in node.properties:
                raise UnknownProperty("node %d lacks binder property %r" % (nid, binder))
            bound_value = node.properties[binder]
            reachable = self._reach_everything(nid)
            for rid in reachable:
                if self._match(q2, self._nodes[rid], bound_value):
                    results2.add(rid)
        return results1, sorted(results2)

    def _reach_everything(self, start):
        seen = set()
        frontier = [start]
        while frontier:
            nxt = []
            for nid in frontier:
                for other, _, outgoing in self._adj[nid]:
                    if outgoing and other not in seen:
                        seen.add(other)
                        nxt.append(other)
            frontier = nxt
        return seen

    @staticmethod
    def _match(query, node, bound_value):
        if callable(query):
            return bool(query(node, bound_value)) if bound_value is not None else bool(query(node))
        for name, want in query.items():
            if name not in node.properties:
                return False
            if want is ANY:
                continue
            if want is BOUND:
                want = bound_value
            if isinstance(want, str):
                want = want.encode("utf-8")
            if node.properties[name] != want:
                return False
        return True


# --- line-format load/dump used by the planning CLI ---

def load_graph_lines(lines):
    """Build a graph from "N <id> <weight>" / "E <from> <to> <type> <length>" lines."""
    graph = PropertyGraph()
    pending_nodes = {}
    edges = []
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "N" and len(parts) == 3:
            pending_nodes[int(parts[1])] = float(parts[2])
        elif parts[0] == "E" and len(parts) == 5:
            edges.append((int(parts[1]), int(parts[2]), parts[3], float(parts[4])))
        else:
            raise ValueError("bad graph line: %r" % raw)
    for node_id in sorted(pending_nodes):
        node = graph.create_node(pending_nodes[node_id])
        if node.id != node_id:
            raise ValueError("node ids must be dense and start at 0, got %d" % node_id)
    for frm, to, rel_type, length in edges:
        graph.create_relationship(frm, to, rel_type, length)
    return graph
