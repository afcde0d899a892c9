import math

import numpy as np
import pytest

from seqgvae import autodiff as ad
from seqgvae.dataset import make_cycle
from seqgvae.destructor import (
    OrderError,
    encode_given_order,
    encode_sample,
    removal_orders,
)
from seqgvae.graph import Graph

import reference as ref
from helpers import tiny_params


def path(n):
    g = Graph()
    for _ in range(n):
        g.add_node()
    for i in range(n - 1):
        g.add_edge(i, i + 1)
    return g


def star(n):
    g = Graph()
    for _ in range(n):
        g.add_node()
    for i in range(1, n):
        g.add_edge(0, i)
    return g


def complete(n):
    g = Graph()
    for _ in range(n):
        g.add_node()
    for u in range(n):
        for v in range(u + 1, n):
            g.add_edge(u, v)
    return g


def test_single_node():
    g = Graph()
    g.add_node()
    enc = encode_sample(g, tiny_params(0), np.random.default_rng(0))
    assert enc.log_q.item() == 0.0 and enc.order == [0]


def test_two_nodes_symmetric():
    enc = encode_sample(path(2), tiny_params(1), np.random.default_rng(0))
    assert enc.log_q.item() == pytest.approx(math.log(0.5), abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_four_cycle_orders_sum_to_one(seed):
    params = tiny_params(seed)
    g = make_cycle(4)
    total = math.fsum(math.exp(encode_given_order(g, params, o).log_q.item())
                      for o in removal_orders(g))
    assert abs(total - 1.0) <= 1e-12


def test_three_nodes_six_orders():
    params = tiny_params(2)
    g = path(3)
    orders = list(removal_orders(g))
    assert len(orders) == 6
    assert math.fsum(math.exp(encode_given_order(g, params, o).log_q.item())
                     for o in orders) == pytest.approx(1.0, abs=1e-12)


def test_constant_scores_give_uniform_orders():
    params = tiny_params(3)
    params["phi/removal/W2"].data[...] = 0.0
    params["phi/removal/b2"].data[...] = 1.7
    enc = encode_sample(make_cycle(6), params, np.random.default_rng(0))
    expected = -math.fsum(math.log(k) for k in range(2, 7))
    assert enc.log_q.item() == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("shape", [path, star, complete, make_cycle])
def test_matches_reference_model(seed, shape):
    params = tiny_params(seed, d=3, d_e=2, rounds=2)
    g = shape(4)
    order = list(np.random.default_rng(seed).permutation(4))
    enc = encode_given_order(g, params, order)
    z, log_q = ref.encode(params, g, order)
    np.testing.assert_allclose(enc.z.data, z, rtol=0, atol=1e-12)
    assert enc.log_q.item() == pytest.approx(log_q, abs=1e-12)
    assert enc.removal_order == order


def test_replay_reproduces_sample():
    params = tiny_params(4)
    g = make_cycle(5)
    enc = encode_sample(g, params, np.random.default_rng(11))
    again = encode_given_order(g, params, enc.removal_order)
    assert again.log_q.item() == enc.log_q.item()
    assert np.array_equal(again.z.data, enc.z.data)


def test_same_rng_same_trajectory():
    params = tiny_params(5)
    a = encode_sample(make_cycle(7), params, np.random.default_rng(3))
    b = encode_sample(make_cycle(7), params, np.random.default_rng(3))
    assert a.order == b.order and a.log_q.item() == b.log_q.item()


def test_input_left_unmodified():
    g = make_cycle(5)
    before = g.signature()
    encode_sample(g, tiny_params(6), np.random.default_rng(0))
    assert g.signature() == before and g.embeddings is None


def test_order_preserving_relabel_is_bit_identical():
    params = tiny_params(7)
    g = make_cycle(5)
    mapping = {v: 10 + 3 * v for v in g.node_ids()}
    h = g.relabel(mapping)
    order = [3, 0, 4, 1, 2]
    a = encode_given_order(g, params, order)
    b = encode_given_order(h, params, [mapping[v] for v in order])
    assert a.log_q.item() == b.log_q.item()
    assert np.array_equal(a.z.data, b.z.data)


def test_arbitrary_relabel_agrees_to_roundoff():
    params = tiny_params(8, d=3)
    g = star(5)
    g.add_edge(1, 2)
    perm = [4, 2, 0, 3, 1]
    h = g.relabel(dict(enumerate(perm)))
    order = [1, 0, 3, 2, 4]
    a = encode_given_order(g, params, order)
    b = encode_given_order(h, params, [perm[v] for v in order])
    assert b.log_q.item() == pytest.approx(a.log_q.item(), abs=1e-12)
    np.testing.assert_allclose(b.z.data, a.z.data, rtol=0, atol=1e-12)


def test_bad_order_rejected():
    with pytest.raises(OrderError):
        encode_given_order(make_cycle(3), tiny_params(0), [0, 1, 1])


def test_empty_graph_rejected():
    with pytest.raises(ValueError):
        encode_sample(Graph(), tiny_params(0), np.random.default_rng(0))


def test_sampling_frequencies_follow_q():
    params = tiny_params(9)
    g = path(3)
    probs = {o: math.exp(encode_given_order(g, params, o).log_q.item())
             for o in removal_orders(g)}
    rng = np.random.default_rng(0)
    n = 20000
    counts = {}
    for _ in range(n):
        o = tuple(encode_sample(g, params, rng).removal_order)
        counts[o] = counts.get(o, 0) + 1
    for o, p in probs.items():
        se = math.sqrt(p * (1 - p) / n)
        assert abs(counts.get(o, 0) / n - p) <= 5 * se + 1e-12


def test_latent_is_last_tape_value():
    params = tiny_params(10)
    with ad.Tape() as tape:
        enc = encode_given_order(make_cycle(3), params, [0, 1, 2])
        root = ad.total(enc.z)
    grads = ad.backward(root, tape, params)
    assert any(np.any(grads[n]) for n in params.names("phi"))
    assert not any(np.any(grads[n]) for n in params.names("theta"))
