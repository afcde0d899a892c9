"""Encoder: stochastic node-by-node deconstruction of a graph.

Each step propagates messages over the remaining graph, scores every node
with the removal network, samples one node from the softmax of the scores
and deletes it. The embedding of the last surviving node is the latent
code; the removal order reversed is the construction order.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .model import infer_config
from .propnet import prop_rounds, propagate


class OrderError(ValueError):
    pass


@dataclass
class EncodeResult:
    z: ad.Tensor
    order: list                    # construction order, survivor first
    log_q: ad.Tensor
    per_step_logprobs: list = field(default_factory=list)

    @property
    def removal_order(self):
        return self.order[::-1]


def embed_types(g, params, prefix, node_types=None):
    """Initialise node (and edge) embeddings of ``g`` from their types."""
    W, b = params[f"{prefix}/node_embed/W"], params[f"{prefix}/node_embed/b"]
    n_types = W.shape[1]
    ids = g.node_ids()
    types = [g.node_type(v) for v in ids]
    if any(t < 0 or t >= n_types for t in types):
        raise ValueError(f"node type outside 0..{n_types - 1}")
    g.embeddings = ad.affine(W, ad.constant(np.eye(n_types)[types]), b)
    edge_embeddings = EdgeTypeEmbedder(params, prefix)
    for _, e in g.edges():
        e.embedding = edge_embeddings(e.edge_type)


class EdgeTypeEmbedder:
    """Per-episode cache of ``type -> embedding`` (one tape op per type used)."""

    def __init__(self, params, prefix):
        self.W = params[f"{prefix}/edge_embed/W"]
        self.b = params[f"{prefix}/edge_embed/b"]
        self.n_types = self.W.shape[1]
        self._cache = {}

    def __call__(self, edge_type):
        emb = self._cache.get(edge_type)
        if emb is None:
            if not 0 <= edge_type < self.n_types:
                raise ValueError(f"edge type {edge_type} outside 0..{self.n_types - 1}")
            onehot = np.zeros(self.n_types)
            onehot[edge_type] = 1.0
            emb = self._cache[edge_type] = ad.affine(self.W, ad.constant(onehot), self.b)
        return emb


def _deconstruct(x, params, choose):
    if x.num_nodes == 0:
        raise ValueError("cannot encode an empty graph")
    cfg = infer_config(params)
    rounds = prop_rounds(params, "phi/prop")
    scorer = params.group("phi/removal")
    work = x.copy_structure(dim=cfg.d, edge_dim=cfg.d_e)
    embed_types(work, params, "phi")
    steps, removed = [], []
    while work.num_nodes > 1:
        propagate(work, rounds)
        n = work.num_nodes
        logp = ad.log_softmax(ad.reshape(ad.mlp(scorer, work.embeddings), (n,)))
        ids = work.node_ids()
        i = choose(logp.data, ids)
        steps.append(ad.pick(logp, i))
        removed.append(ids[i])
        work.remove_node(ids[i])
    survivor = work.node_ids()[0]
    z = ad.reshape(work.embeddings, (cfg.d,))
    log_q = ad.add_n(steps) if steps else ad.constant(0.0)
    return EncodeResult(z=z, order=[survivor] + removed[::-1], log_q=log_q,
                        per_step_logprobs=steps)


def sample_index(logp, u):
    """Inverse-CDF draw from log-probabilities ``logp`` with uniform ``u``."""
    cdf = np.cumsum(np.exp(logp))
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(i, len(logp) - 1)


def encode_sample(x, params, rng):
    """Sample a deconstruction of ``x`` (which is left untouched)."""
    return _deconstruct(x, params, lambda logp, ids: sample_index(logp, rng.random()))


def encode_given_order(x, params, removal_order):
    """Deconstruct ``x`` removing nodes in ``removal_order`` (survivor last)."""
    removal_order = [int(v) for v in removal_order]
    if sorted(removal_order) != sorted(x.node_ids()):
        raise OrderError("removal order is not a permutation of the node set")
    pending = iter(removal_order)

    def choose(logp, ids):
        return ids.index(next(pending))

    return _deconstruct(x, params, choose)


def removal_orders(x):
    """Every removal order of ``x`` (all permutations, survivor last)."""
    return itertools.permutations(x.node_ids())
