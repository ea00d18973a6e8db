import itertools
import math
import random

import pytest

from robostore.errors import UnknownElement, UnknownProperty
from robostore.graph import ANY, BOUND, PropertyGraph, load_graph_lines


def enumerate_best_path(graph, start, goal):
    """Oracle: min (cost, node sequence, rel sequence) over all simple paths."""
    best = None
    adj = {n: [] for n in graph.node_ids()}
    for rid in sorted(graph._rels):
        rel = graph.relationship(rid)
        adj[rel.from_id].append((rel.to_id, rid))
        adj[rel.to_id].append((rel.from_id, rid))

    def walk(nid, cost, nodes, rels):
        nonlocal best
        if nid == goal:
            key = (cost, tuple(nodes), tuple(rels))
            if best is None or key < best:
                best = key
            return
        for other, rid in adj[nid]:
            if other in nodes:
                continue
            step = graph.relationship(rid).length + graph.node(other).weight
            walk(other, cost + step, nodes + [other], rels + [rid])

    walk(start, 0.0, [start], [])
    return best


def random_graph(rng, n_nodes=None, p_edge=0.35, max_weight=20):
    graph = PropertyGraph()
    n = n_nodes or rng.randint(2, 10)
    for _ in range(n):
        graph.create_node(weight=rng.randint(0, max_weight))
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < p_edge:
                graph.create_relationship(a, b, "road", length=rng.randint(0, max_weight))
    return graph


def grid_graph(width, height, weights=None):
    """4-neighbour unit grid; node id = y * width + x."""
    graph = PropertyGraph()
    for y in range(height):
        for x in range(width):
            w = weights.get((x, y), 0) if weights else 0
            node = graph.create_node(weight=w)
            node.set_property("x", str(x))
            node.set_property("y", str(y))
    for y in range(height):
        for x in range(width):
            nid = y * width + x
            if x + 1 < width:
                graph.create_relationship(nid, nid + 1, "grid", 1.0)
            if y + 1 < height:
                graph.create_relationship(nid, nid + width, "grid", 1.0)
    return graph


def euclidean(graph):
    def h(nid, goal):
        a, b = graph.node(nid), graph.node(goal)
        ax, ay = int(a.get_property("x")), int(a.get_property("y"))
        bx, by = int(b.get_property("x")), int(b.get_property("y"))
        return math.hypot(ax - bx, ay - by)
    return h


# --- element crud ---

def test_message_example_round_trips_byte_exact():
    graph = PropertyGraph()
    first = graph.create_node()
    second = graph.create_node()
    rel = graph.create_relationship(first, second, "KNOWS")
    first.set_property("message", "Arun, ")
    second.set_property("message", "Raju")
    rel.set_property("message", " son")
    assert first.get_property("message") == b"Arun, "
    assert rel.get_property("message") == b" son"
    assert second.get_property("message") == b"Raju"


def test_get_unset_property_absent():
    graph = PropertyGraph()
    node = graph.create_node()
    assert node.get_property("missing") is None


def test_set_twice_last_wins():
    graph = PropertyGraph()
    node = graph.create_node()
    node.set_property("k", b"a")
    node.set_property("k", b"b")
    assert node.get_property("k") == b"b"


def test_unknown_element_errors():
    graph = PropertyGraph()
    with pytest.raises(UnknownElement):
        graph.node(99)
    with pytest.raises(UnknownElement):
        graph.create_relationship(0, 1, "x")
    with pytest.raises(UnknownElement):
        graph.traverse(5)


# --- traverse ---

def test_traverse_depth_zero_is_start_only():
    graph = PropertyGraph()
    a = graph.create_node()
    b = graph.create_node()
    graph.create_relationship(a, b, "x")
    assert graph.traverse(a, max_depth=0) == {a.id}


def test_traverse_linear_chain_depth_one():
    graph = PropertyGraph()
    a, b, c = (graph.create_node() for _ in range(3))
    graph.create_relationship(a, b, "x")
    graph.create_relationship(b, c, "x")
    assert graph.traverse(a, max_depth=1) == {a.id, b.id}
    assert graph.traverse(a, max_depth=2) == {a.id, b.id, c.id}


def test_traverse_respects_direction_and_type():
    graph = PropertyGraph()
    a, b, c = (graph.create_node() for _ in range(3))
    graph.create_relationship(a, b, "x")
    graph.create_relationship(c, a, "x")
    graph.create_relationship(a, c, "y")
    assert graph.traverse(a, rel_type="x", max_depth=1) == {a.id, b.id}
    assert graph.traverse(a, rel_type="x", max_depth=1, directed=False) == {a.id, b.id, c.id}


def test_traverse_matches_matrix_power_oracle():
    rng = random.Random(71)
    for _ in range(20):
        graph = PropertyGraph()
        n = rng.randint(2, 8)
        for _ in range(n):
            graph.create_node()
        mat = [[False] * n for _ in range(n)]
        for a in range(n):
            for b in range(n):
                if a != b and rng.random() < 0.3:
                    graph.create_relationship(a, b, "e")
                    mat[a][b] = True
        depth = rng.randint(0, 4)
        start = rng.randrange(n)
        # oracle: reachable within `depth` steps via repeated relaxation
        reach = {start}
        frontier = {start}
        for _ in range(depth):
            frontier = {b for a in frontier for b in range(n) if mat[a][b]} - reach
            reach |= frontier
        assert graph.traverse(start, max_depth=depth) == reach


# --- shortest paths ---

def test_single_node_path_costs_zero():
    graph = PropertyGraph()
    a = graph.create_node(weight=7)
    path = graph.shortest_path(a, a)
    assert path.nodes == [a.id] and path.relationships == [] and path.cost == 0


def test_unreachable_returns_none():
    graph = PropertyGraph()
    a = graph.create_node()
    b = graph.create_node()
    assert graph.shortest_path(a, b) is None


def test_obstacle_grid_goes_around():
    graph = grid_graph(2, 2, weights={(1, 0): 100})
    path = graph.shortest_path(0, 3)
    assert path.cost == 2
    assert path.nodes == [0, 2, 3]


def test_random_graphs_match_enumeration_oracle():
    rng = random.Random(2024)
    for trial in range(50):
        graph = random_graph(rng)
        ids = graph.node_ids()
        start, goal = rng.sample(ids, 2) if len(ids) > 1 else (ids[0], ids[0])
        best = enumerate_best_path(graph, start, goal)
        for algo in ("dijkstra", "astar"):
            path = graph.shortest_path(start, goal, algorithm=algo)
            if best is None:
                assert path is None, trial
            else:
                assert path is not None, trial
                assert abs(path.cost - best[0]) < 1e-9, trial
                assert tuple(path.nodes) == best[1], trial
                assert tuple(path.relationships) == best[2], trial


def test_dijkstra_astar_equal_on_grids_with_euclidean():
    rng = random.Random(9)
    for _ in range(10):
        w, h = rng.randint(2, 4), rng.randint(2, 4)
        weights = {(rng.randrange(w), rng.randrange(h)): rng.randint(0, 9) for _ in range(3)}
        graph = grid_graph(w, h, weights)
        start, goal = 0, w * h - 1
        d = graph.shortest_path(start, goal, algorithm="dijkstra")
        d_exp = graph.last_search.expansions
        a = graph.shortest_path(start, goal, algorithm="astar", heuristic=euclidean(graph))
        a_exp = graph.last_search.expansions
        assert abs(d.cost - a.cost) < 1e-9
        assert d.nodes == a.nodes and d.relationships == a.relationships
        assert a_exp <= d_exp


def test_euclidean_heuristic_is_admissible_on_grid():
    graph = grid_graph(4, 3, weights={(1, 1): 5})
    h = euclidean(graph)
    goal = 11
    for nid in graph.node_ids():
        path = graph.shortest_path(nid, goal)
        if path is not None:
            assert h(nid, goal) <= path.cost + 1e-9


def test_returned_path_is_connected_and_cost_consistent():
    rng = random.Random(13)
    for _ in range(20):
        graph = random_graph(rng)
        ids = graph.node_ids()
        start, goal = rng.choice(ids), rng.choice(ids)
        path = graph.shortest_path(start, goal)
        if path is None:
            continue
        assert path.nodes[0] == start and path.nodes[-1] == goal
        for i, rid in enumerate(path.relationships):
            rel = graph.relationship(rid)
            assert {path.nodes[i], path.nodes[i + 1]} == {rel.from_id, rel.to_id}
        assert abs(graph.path_cost(path.nodes, path.relationships) - path.cost) < 1e-12


def test_increasing_weight_never_cheapens_path():
    rng = random.Random(29)
    for _ in range(15):
        graph = random_graph(rng, n_nodes=7)
        start, goal = 0, 6
        before = graph.shortest_path(start, goal)
        bump = rng.randrange(7)
        graph.set_node_weight(bump, graph.node(bump).weight + rng.randint(1, 10))
        after = graph.shortest_path(start, goal)
        if before is None:
            assert after is None
        else:
            assert after.cost >= before.cost - 1e-9


# --- provenance queries ---

def build_message_graph():
    graph = PropertyGraph()
    first = graph.create_node()
    second = graph.create_node()
    rel = graph.create_relationship(first, second, "KNOWS")
    first.set_property("message", "Arun, ")
    second.set_property("message", "Raju")
    rel.set_property("message", " son")
    return graph, first, second


def test_provenance_no_q1_hits_means_both_empty():
    graph, _, _ = build_message_graph()
    r1, r2 = graph.provenance_query({"message": b"nobody"}, "message", {"message": ANY})
    assert r1 == [] and r2 == []


def test_provenance_message_example():
    graph, first, second = build_message_graph()
    r1, r2 = graph.provenance_query({"message": b"Arun, "}, "message", {"message": ANY})
    assert r1 == [first.id]
    assert r2 == [second.id]


def test_provenance_missing_binder_property():
    graph = PropertyGraph()
    node = graph.create_node()
    node.set_property("other", b"x")
    with pytest.raises(UnknownProperty):
        graph.provenance_query({"other": b"x"}, "message", {"message": ANY})


def test_provenance_matches_two_pass_oracle():
    rng = random.Random(55)
    for _ in range(20):
        graph = PropertyGraph()
        n = rng.randint(3, 8)
        for i in range(n):
            node = graph.create_node()
            node.set_property("tag", rng.choice([b"a", b"b", b"c"]))
        for a in range(n):
            for b in range(n):
                if a != b and rng.random() < 0.25:
                    graph.create_relationship(a, b, "e")
        r1, r2 = graph.provenance_query({"tag": b"a"}, "tag", {"tag": BOUND})
        # oracle: filter, then reachability by repeated adjacency expansion
        expect1 = [i for i in graph.node_ids() if graph.node(i).get_property("tag") == b"a"]
        expect2 = set()
        for src in expect1:
            reach = set()
            frontier = {src}
            while frontier:
                step = set()
                for nid in frontier:
                    for other, rid, outgoing in graph._adj[nid]:
                        if outgoing and other not in reach:
                            reach.add(other)
                            step.add(other)
                frontier = step
            bound = graph.node(src).get_property("tag")
            expect2 |= {i for i in reach if graph.node(i).get_property("tag") == bound}
        assert r1 == expect1
        assert r2 == sorted(expect2)


# --- line format ---

def test_graph_line_format_round_trip():
    lines = [
        "N 0 0",
        "N 1 100",
        "N 2 0",
        "N 3 0",
        "E 0 1 grid 1",
        "E 0 2 grid 1",
        "E 1 3 grid 1",
        "E 2 3 grid 1",
    ]
    graph = load_graph_lines(lines)
    path = graph.shortest_path(0, 3)
    assert path.cost == 2 and path.nodes == [0, 2, 3]
