"""Mutable undirected graph with typed nodes and edges.

Node embeddings are kept as one row-stacked tensor (row ``i`` belongs to the
``i``-th node in ascending id order) so message passing can run as a few
batched tape operations. Edge embeddings are per-edge tensors, usually
shared between edges of the same type. Structural graphs (datasets,
samples) simply carry no embeddings.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


class GraphError(ValueError):
    pass


class SelfLoopError(GraphError):
    pass


class DuplicateEdgeError(GraphError):
    pass


class MissingNodeError(GraphError, KeyError):
    pass


class DimensionError(GraphError):
    pass


@dataclass
class EdgeState:
    edge_type: int
    embedding: object = None


def edge_key(u, v):
    return (u, v) if u < v else (v, u)


class Graph:
    def __init__(self, dim=None, edge_dim=None):
        self.dim = dim
        self.edge_dim = edge_dim
        self._types = {}        # id -> node type, insertion order == ascending id
        self._adj = {}          # id -> set of neighbour ids
        self._edges = {}        # (lo, hi) -> EdgeState
        self.next_id = 0
        self.embeddings = None  # Tensor[n, dim] or None
        self._rows = None
        self._sorted_edges = None

    # -- queries -----------------------------------------------------------

    @property
    def num_nodes(self):
        return len(self._types)

    @property
    def num_edges(self):
        return len(self._edges)

    def node_ids(self):
        return list(self._types)

    def node_type(self, v):
        self._require(v)
        return self._types[v]

    def has_node(self, v):
        return v in self._types

    def has_edge(self, u, v):
        return edge_key(u, v) in self._edges

    def edge(self, u, v):
        return self._edges[edge_key(u, v)]

    def edges(self):
        """``[((u, v), EdgeState)]`` in ascending ordered-pair order, ``u < v``."""
        if self._sorted_edges is None:
            self._sorted_edges = sorted(self._edges.items())
        return self._sorted_edges

    def degree(self, v):
        self._require(v)
        return len(self._adj[v])

    def neighbors(self, v):
        self._require(v)
        return sorted(self._adj[v])

    def row_index(self):
        """``{node id: embedding row}``."""
        if self._rows is None:
            self._rows = {v: i for i, v in enumerate(self._types)}
        return self._rows

    def embedding(self, v):
        """Embedding of node ``v`` as a vector tensor (recorded as a row read)."""
        if self.embeddings is None:
            return None
        return ad.row(self.embeddings, self.row_index()[v])

    # -- mutation ----------------------------------------------------------

    def add_node(self, node_type=0, embedding=None):
        if embedding is not None:
            if self.dim is not None and embedding.shape != (self.dim,):
                raise DimensionError(f"node embedding shape {embedding.shape} != ({self.dim},)")
            if self.embeddings is None and self.num_nodes:
                raise DimensionError("graph has unembedded nodes; cannot add an embedded one")
            new = ad.reshape(embedding, (1, -1))
            self.embeddings = new if self.embeddings is None else ad.concat(
                [self.embeddings, new], axis=0)
        elif self.embeddings is not None:
            raise DimensionError("embedded graph needs an embedding for every node")
        v = self.next_id
        self.next_id += 1
        self._types[v] = int(node_type)
        self._adj[v] = set()
        self._rows = None
        return v

    def add_edge(self, u, v, edge_type=0, embedding=None):
        if u == v:
            raise SelfLoopError(f"self-loop on node {u}")
        self._require(u)
        self._require(v)
        key = edge_key(u, v)
        if key in self._edges:
            raise DuplicateEdgeError(f"edge {key} already present")
        if embedding is not None and self.edge_dim is not None \
                and embedding.shape != (self.edge_dim,):
            raise DimensionError(f"edge embedding shape {embedding.shape} != ({self.edge_dim},)")
        self._edges[key] = EdgeState(int(edge_type), embedding)
        self._adj[u].add(v)
        self._adj[v].add(u)
        self._sorted_edges = None

    def remove_node(self, v):
        self._require(v)
        for u in self._adj.pop(v):
            self._adj[u].discard(v)
            del self._edges[edge_key(u, v)]
        if self.embeddings is not None:
            row = self.row_index()[v]
            keep = [i for i in range(self.num_nodes) if i != row]
            self.embeddings = ad.take_rows(self.embeddings, keep) if keep else None
        del self._types[v]
        self._rows = None
        self._sorted_edges = None

    def _require(self, v):
        if v not in self._types:
            raise MissingNodeError(f"no node {v}")

    # -- copies / io -------------------------------------------------------

    def copy_structure(self, dim=None, edge_dim=None):
        """Same ids, types and edges, without embeddings."""
        g = Graph(dim=dim, edge_dim=edge_dim)
        g._types = dict(self._types)
        g._adj = {v: set(nb) for v, nb in self._adj.items()}
        g._edges = {k: EdgeState(e.edge_type) for k, e in self._edges.items()}
        g.next_id = self.next_id
        return g

    def relabel(self, mapping):
        """Structural copy with node ``v`` renamed ``mapping[v]``."""
        g = Graph(dim=self.dim, edge_dim=self.edge_dim)
        for v in sorted(self._types, key=lambda v: mapping[v]):
            g._types[mapping[v]] = self._types[v]
            g._adj[mapping[v]] = {mapping[u] for u in self._adj[v]}
        g._edges = {edge_key(mapping[u], mapping[v]): EdgeState(e.edge_type)
                    for (u, v), e in self._edges.items()}
        g.next_id = max(g._types, default=-1) + 1
        return g

    def signature(self):
        """Hashable structural summary (ids, types, typed edges)."""
        return (tuple(self._types.items()),
                tuple((k, e.edge_type) for k, e in self.edges()))

    def to_dict(self):
        return {
            "nodes": [{"id": v, "type": t} for v, t in self._types.items()],
            "edges": [{"u": u, "v": v, "type": e.edge_type} for (u, v), e in self.edges()],
        }

    @classmethod
    def from_dict(cls, obj):
        g = cls()
        ids = []
        for node in obj["nodes"]:
            ids.append(int(node["id"]))
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate node ids")
        for node in sorted(obj["nodes"], key=lambda n: int(n["id"])):
            v = int(node["id"])
            g._types[v] = int(node.get("type", 0))
            g._adj[v] = set()
        g.next_id = max(ids, default=-1) + 1
        for e in obj["edges"]:
            g.add_edge(int(e["u"]), int(e["v"]), int(e.get("type", 0)))
        return g


def audit(g):
    """Raise ``GraphError`` if any structural invariant is broken."""
    ids = g.node_ids()
    if ids != sorted(ids):
        raise GraphError("node ids out of order")
    if ids and ids[-1] >= g.next_id:
        raise GraphError("node id not below next_id")
    for (u, v), _ in g.edges():
        if u == v:
            raise GraphError(f"self-loop {u}")
        if u > v:
            raise GraphError(f"edge key {(u, v)} not normalised")
        if not (g.has_node(u) and g.has_node(v)):
            raise GraphError(f"edge {(u, v)} has a missing endpoint")
    for v in ids:
        for u in g._adj[v]:
            if not g.has_edge(u, v):
                raise GraphError(f"adjacency {v}-{u} without edge")
    if sum(len(nb) for nb in g._adj.values()) != 2 * g.num_edges:
        raise GraphError("adjacency and edge table disagree")
    if g.embeddings is not None and g.embeddings.shape[0] != g.num_nodes:
        raise GraphError("embedding rows do not match node count")


def is_connected(g):
    ids = g.node_ids()
    if not ids:
        return True
    seen = {ids[0]}
    frontier = [ids[0]]
    while frontier:
        v = frontier.pop()
        for u in g._adj[v]:
            if u not in seen:
                seen.add(u)
                frontier.append(u)
    return len(seen) == len(ids)


def is_valid_cycle(g):
    """Connected, 2-regular, at least three nodes."""
    if g.num_nodes < 3:
        return False
    if any(len(nb) != 2 for nb in g._adj.values()):
        return False
    return is_connected(g)


def cycle_length(g):
    return g.num_nodes if is_valid_cycle(g) else None


def write_jsonl(graphs, path, extra=None):
    """One graph per line; ``extra(i, g)`` may return fields to merge in."""
    with open(path, "w") as fh:
        for i, g in enumerate(graphs):
            obj = g.to_dict()
            if extra is not None:
                obj.update(extra(i, g))
            fh.write(json.dumps(obj) + "\n")


def read_jsonl(path):
    graphs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                graphs.append(Graph.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise GraphError(f"{path}:{lineno}: {exc}") from exc
    return graphs


def one_hot(index, size):
    v = np.zeros(size)
    v[index] = 1.0
    return v
