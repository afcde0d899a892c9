"""Synthetic cycle-graph corpus."""

from dataclasses import dataclass

from .graph import Graph, read_jsonl, write_jsonl
from .rng import stream


@dataclass(frozen=True)
class DatasetSpec:
    min_len: int = 5
    max_len: int = 14
    graphs_per_length: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.min_len < 3:
            raise ValueError(f"min_len must be >= 3 (got {self.min_len})")
        if self.max_len < self.min_len:
            raise ValueError(f"max_len must be >= min_len (got {self.max_len} < {self.min_len})")
        if self.graphs_per_length < 1:
            raise ValueError(f"graphs_per_length must be >= 1 (got {self.graphs_per_length})")


def make_cycle(n):
    """Cycle on nodes ``0..n-1`` in ring order; one node and edge type."""
    if n < 3:
        raise ValueError(f"a cycle needs at least 3 nodes, got {n}")
    g = Graph()
    for _ in range(n):
        g.add_node(0)
    for i in range(n):
        g.add_edge(i, (i + 1) % n, 0)
    return g


def cycle_dataset(spec):
    """Cycles for every length in ``spec``; line order shuffled by ``spec.seed``."""
    graphs = [make_cycle(n)
              for n in range(spec.min_len, spec.max_len + 1)
              for _ in range(spec.graphs_per_length)]
    perm = stream(spec.seed, "dataset").permutation(len(graphs))
    return [graphs[i] for i in perm]


def build_dataset(spec, path):
    graphs = cycle_dataset(spec)
    write_jsonl(graphs, path)
    return graphs


def load_dataset(path):
    return read_jsonl(path)
