"""Decoder: grows a graph from a single node seeded with the latent code.

Every step propagates, reads out a graph embedding, and draws the add-node
Bernoulli. A new node gets ``R_init(h_G)``; its edge type to every earlier
node is drawn independently from a softmax whose last class is "no edge".
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .destructor import EdgeTypeEmbedder, sample_index
from .graph import Graph
from .model import infer_config
from .propnet import prop_rounds, propagate, readout


class TargetMismatch(ValueError):
    pass


@dataclass
class DecodeResult:
    graph: Graph
    order: list
    log_p: ad.Tensor
    per_step_logprobs: list = field(default_factory=list)
    forced_stop: bool = False


class _Decoder:
    def __init__(self, params):
        self.cfg = infer_config(params)
        self.rounds = prop_rounds(params, "theta/prop")
        self.readout = params.group("theta/readout")
        self.addnode = params.group("theta/addnode")
        self.init_node = params.group("theta/init_node")
        self.addedge = params.group("theta/addedge")
        self.edge_embed = EdgeTypeEmbedder(params, "theta")

    def run(self, z, keep_going, choose_edges, max_nodes, reverse_edges=False):
        cfg = self.cfg
        if z.shape != (cfg.d,):
            raise ValueError(f"latent code shape {z.shape} != ({cfg.d},)")
        g = Graph(dim=cfg.d, edge_dim=cfg.d_e)
        order = [g.add_node(0, z)]
        steps = []
        forced = False
        no_edge = cfg.edge_types
        while True:
            if max_nodes is not None and g.num_nodes >= max_nodes:
                forced = True
                break
            propagate(g, self.rounds)
            h_g = readout(g, self.readout)
            logit = ad.reshape(ad.mlp(self.addnode, h_g), ())
            if not keep_going(float(ad._stable_sigmoid(logit.data)), g.num_nodes):
                steps.append(ad.log_sigmoid(ad.scale(logit, -1.0)))
                break
            steps.append(ad.log_sigmoid(logit))
            h_v = ad.mlp(self.init_node, h_g)
            prior = g.node_ids()
            if reverse_edges:
                prior = prior[::-1]
            v = g.add_node(0, h_v)
            rows = g.row_index()
            k = len(prior)
            pair_in = ad.concat([
                ad.take_rows(g.embeddings, [rows[u] for u in prior]),
                ad.repeat_row(h_v, k),
                ad.repeat_row(h_g, k),
            ])
            logp = ad.log_softmax(ad.mlp(self.addedge, pair_in))
            choices = choose_edges(logp.data, prior, v)
            steps.append(ad.total(ad.pick(logp, choices)))
            for u, c in sorted(zip(prior, choices)):
                if c != no_edge:
                    g.add_edge(u, v, int(c), self.edge_embed(int(c)))
            order.append(v)
        log_p = ad.add_n(steps) if steps else ad.constant(0.0)
        return DecodeResult(graph=g, order=order, log_p=log_p,
                            per_step_logprobs=steps, forced_stop=forced)


def generate(z, params, rng, max_nodes=50):
    """Sample a graph from the decoder seeded with ``z``."""
    if max_nodes < 1:
        raise ValueError("max_nodes must be at least 1")

    def keep_going(p_continue, n):
        return rng.random() < p_continue

    def choose_edges(logp, prior, v):
        us = rng.random(len(prior))
        return np.array([sample_index(logp[i], us[i]) for i in range(len(prior))])

    return _Decoder(params).run(z, keep_going, choose_edges, max_nodes)


def teacher_force(z, target, order, params, max_nodes=None, reverse_edges=False):
    """Log-probability of building ``target`` node by node in ``order``.

    With ``max_nodes`` set, a target of exactly that size ends with the
    forced (probability-one) stop that :func:`generate` applies at the cap.
    """
    order = [int(v) for v in order]
    if sorted(order) != sorted(target.node_ids()):
        raise TargetMismatch("order is not a permutation of the target's nodes")
    n = len(order)
    if max_nodes is not None and n > max_nodes:
        raise TargetMismatch(f"target has {n} nodes, above max_nodes={max_nodes}")
    dec = _Decoder(params)
    no_edge = dec.cfg.edge_types

    def keep_going(p_continue, built):
        return built < n

    def choose_edges(logp, prior, v):
        tv = order[v]
        out = np.empty(len(prior), dtype=np.int64)
        for i, u in enumerate(prior):
            tu = order[u]
            out[i] = target.edge(tu, tv).edge_type if target.has_edge(tu, tv) else no_edge
        return out

    return dec.run(z, keep_going, choose_edges, max_nodes, reverse_edges=reverse_edges)


def enumerate_trajectories(z, params, max_nodes):
    """Every decoder trajectory under ``max_nodes`` with its log-probability.

    Yields :class:`DecodeResult` objects; their probabilities sum to one.
    Exponential in ``max_nodes``, meant for small oracle checks.
    """
    if max_nodes < 1:
        raise ValueError("max_nodes must be at least 1")
    dec = _Decoder(params)
    classes = range(dec.cfg.edge_types + 1)
    for size in range(1, max_nodes + 1):
        slots = [range(len(classes))] * (size * (size - 1) // 2)
        for flat in itertools.product(*slots):
            script = iter(flat)

            def keep_going(p_continue, built, size=size):
                return built < size

            def choose_edges(logp, prior, v, script=script):
                return np.array([next(script) for _ in prior], dtype=np.int64)

            yield dec.run(z, keep_going, choose_edges, max_nodes)
