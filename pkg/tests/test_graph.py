import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqgvae import autodiff as ad
from seqgvae.dataset import make_cycle
from seqgvae.graph import (
    DimensionError,
    DuplicateEdgeError,
    Graph,
    GraphError,
    MissingNodeError,
    SelfLoopError,
    audit,
    is_valid_cycle,
    read_jsonl,
    write_jsonl,
)


def path_graph(n):
    g = Graph()
    for _ in range(n):
        g.add_node()
    for i in range(n - 1):
        g.add_edge(i, i + 1)
    return g


def star(leaves):
    g = Graph()
    for _ in range(leaves + 1):
        g.add_node()
    for i in range(1, leaves + 1):
        g.add_edge(0, i)
    return g


class TestAddNode:
    def test_first_node(self):
        g = Graph()
        v = g.add_node()
        assert (g.num_nodes, g.num_edges, g.degree(v)) == (1, 0, 0)

    def test_distinct_ids(self):
        g = Graph()
        assert g.add_node() != g.add_node()

    def test_ids_not_reused_after_removal(self):
        g = Graph()
        issued = [g.add_node() for _ in range(3)]
        g.remove_node(issued[-1])
        assert g.add_node() not in issued

    def test_embedding_dimension_checked(self):
        g = Graph(dim=3)
        with pytest.raises(DimensionError):
            g.add_node(0, ad.constant(np.zeros(2)))


class TestAddEdge:
    def test_degrees(self):
        g = path_graph(2)
        assert (g.degree(0), g.degree(1)) == (1, 1)

    def test_duplicate_rejected_graph_unchanged(self):
        g = path_graph(2)
        before = g.signature()
        with pytest.raises(DuplicateEdgeError):
            g.add_edge(1, 0)
        assert g.signature() == before

    def test_unordered_key(self):
        g = path_graph(2)
        assert g.has_edge(1, 0) and g.edge(1, 0) is g.edge(0, 1)

    def test_distinct_errors(self):
        g = path_graph(2)
        with pytest.raises(SelfLoopError):
            g.add_edge(0, 0)
        with pytest.raises(MissingNodeError):
            g.add_edge(0, 7)
        assert not issubclass(SelfLoopError, DuplicateEdgeError)


class TestRemoveNode:
    def test_star_center(self):
        g = star(3)
        g.remove_node(0)
        assert g.num_nodes == 3 and g.num_edges == 0

    def test_triangle_vertex(self):
        g = make_cycle(3)
        g.remove_node(1)
        assert g.num_edges == 1 and g.has_edge(0, 2)

    def test_sole_node(self):
        g = Graph()
        g.add_node()
        g.remove_node(0)
        assert g.num_nodes == 0

    def test_missing(self):
        with pytest.raises(MissingNodeError):
            Graph().remove_node(3)

    def test_embedding_rows_follow_removal(self):
        g = Graph(dim=1)
        for k in range(3):
            g.add_node(0, ad.constant([float(k)]))
        g.remove_node(1)
        np.testing.assert_array_equal(g.embeddings.data, [[0.0], [2.0]])
        np.testing.assert_array_equal(g.embedding(2).data, [2.0])


class TestValidCycle:
    def test_triangle(self):
        assert is_valid_cycle(make_cycle(3))

    def test_path(self):
        assert not is_valid_cycle(path_graph(3))

    def test_two_triangles(self):
        g = make_cycle(3)
        for _ in range(3):
            g.add_node()
        g.add_edge(3, 4)
        g.add_edge(4, 5)
        g.add_edge(5, 3)
        assert not is_valid_cycle(g)

    def test_small_graphs(self):
        assert not is_valid_cycle(Graph())
        assert not is_valid_cycle(path_graph(2))

    @pytest.mark.parametrize("n", range(3, 51))
    def test_every_cycle_valid_and_any_edge_deletion_breaks_it(self, n):
        g = make_cycle(n)
        assert is_valid_cycle(g)
        for (u, v), _ in list(g.edges()):
            h = Graph.from_dict(g.to_dict())
            h._edges.pop((u, v))
            h._adj[u].discard(v)
            h._adj[v].discard(u)
            h._sorted_edges = None
            assert not is_valid_cycle(h)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("anre"), st.integers(0, 12), st.integers(0, 12)),
                max_size=60))
def test_random_operation_sequences_keep_invariants(ops):
    g = Graph()
    for op, a, b in ops:
        try:
            if op == "a":
                g.add_node()
            elif op == "n":
                g.add_node(1)
            elif op == "r":
                g.remove_node(a)
            else:
                g.add_edge(a, b)
        except GraphError:
            pass
        audit(g)


def test_add_then_remove_restores():
    g = make_cycle(5)
    before = (g.node_ids(), [k for k, _ in g.edges()])
    v = g.add_node()
    g.remove_node(v)
    assert (g.node_ids(), [k for k, _ in g.edges()]) == before


def test_jsonl_round_trip(tmp_path):
    graphs = [make_cycle(4), star(2)]
    path = tmp_path / "g.jsonl"
    write_jsonl(graphs, path)
    lines = path.read_text().splitlines()
    assert json.loads(lines[0]) == {
        "nodes": [{"id": i, "type": 0} for i in range(4)],
        "edges": [{"u": 0, "v": 1, "type": 0}, {"u": 0, "v": 3, "type": 0},
                  {"u": 1, "v": 2, "type": 0}, {"u": 2, "v": 3, "type": 0}],
    }
    back = read_jsonl(path)
    assert [g.signature() for g in back] == [g.signature() for g in graphs]


def test_jsonl_rejects_bad_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"nodes": [{"id": 0}], "edges": [{"u": 0, "v": 0}]}\n')
    with pytest.raises(GraphError, match="bad.jsonl:1"):
        read_jsonl(path)
