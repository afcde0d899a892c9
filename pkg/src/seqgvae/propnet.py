"""Message passing (prop) and gated-sum readout, parameterised per namespace.

Encoder and decoder each own a copy under ``phi/prop`` and ``theta/prop``.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import glorot


def init_prop_params(store, prefix, d, d_e, rounds, hidden, rng):
    for t in range(rounds):
        base = f"{prefix}/t{t}"
        store.add(f"{base}/msg/W1", glorot(rng, (hidden, 2 * d + d_e)))
        store.add(f"{base}/msg/b1", np.zeros(hidden))
        store.add(f"{base}/msg/W2", glorot(rng, (d, hidden)))
        store.add(f"{base}/msg/b2", np.zeros(d))
        for gate in "ruc":
            store.add(f"{base}/gru/W{gate}", glorot(rng, (d, d)))
            store.add(f"{base}/gru/U{gate}", glorot(rng, (d, d)))
            store.add(f"{base}/gru/b{gate}", np.zeros(d))


def init_readout_params(store, prefix, d, d_g, rng):
    store.add(f"{prefix}/gate/W", glorot(rng, (1, d)))
    store.add(f"{prefix}/gate/b", np.zeros(1))
    store.add(f"{prefix}/transform/W", glorot(rng, (d_g, d)))
    store.add(f"{prefix}/transform/b", np.zeros(d_g))


def prop_rounds(params, prefix):
    """``[(message params, gru params)]`` for rounds ``t0, t1, ...``."""
    rounds = []
    t = 0
    while params.has_group(f"{prefix}/t{t}"):
        rounds.append((params.group(f"{prefix}/t{t}/msg"), params.group(f"{prefix}/t{t}/gru")))
        t += 1
    if not rounds:
        raise KeyError(f"no propagation rounds under {prefix!r}")
    return rounds


def _message_layout(g):
    """Sender rows, receiver rows and the edge-embedding table for every directed message."""
    rows = g.row_index()
    src, dst, slot = [], [], []
    table, seen = [], {}
    for (u, v), e in g.edges():
        key = id(e.embedding)
        k = seen.get(key)
        if k is None:
            k = seen[key] = len(table)
            table.append(e.embedding)
        ru, rv = rows[u], rows[v]
        src += (ru, rv)
        dst += (rv, ru)
        slot += (k, k)
    return src, dst, slot, table


def propagate(g, rounds):
    """Run every round of synchronous message passing, replacing ``g.embeddings``.

    Messages go both ways along each edge with input (sender, receiver, edge);
    incoming messages are summed in ascending edge order and fed to the GRU.
    """
    H = g.embeddings
    n, d = H.shape
    if g.num_edges:
        src, dst, slot, table = _message_layout(g)
        edge_rows = ad.take_rows(ad.stack(table), slot)
    else:
        zero = ad.constant(np.zeros((n, d)))
    for msg, gru in rounds:
        if g.num_edges:
            x = ad.concat([ad.take_rows(H, src), ad.take_rows(H, dst), edge_rows])
            incoming = ad.scatter_add(ad.mlp(msg, x), dst, n)
        else:
            incoming = zero
        H = ad.gru_cell(H, incoming, gru)
    g.embeddings = H
    return H


def readout(g, params):
    """Gated sum over nodes: ``sum_v sigmoid(gate(h_v)) * transform(h_v)``."""
    H = g.embeddings
    if H is None or g.num_nodes == 0:
        raise ValueError("readout of an empty graph")
    gate = ad.sigmoid(ad.affine(params["gate/W"], H, params["gate/b"]))
    values = ad.affine(params["transform/W"], H, params["transform/b"])
    return ad.sum_rows(ad.mul(gate, values))
