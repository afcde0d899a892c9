import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqgvae import autodiff as ad
from seqgvae.autodiff import AdamState, ParamStore, Tape, Tensor

from helpers import fd_arrays, rel_err


def _gru_params(rng, d, scale=1.0):
    return {k: Tensor(rng.normal(scale=scale, size=(d, d) if k[0] in "WU" else d),
                      requires_grad=True) for k in ad.GRU_KEYS}


# -- affine ---------------------------------------------------------------

def test_affine_identity():
    out = ad.affine(Tensor(np.eye(2)), Tensor([3.0, -1.0]), Tensor(np.zeros(2)))
    np.testing.assert_array_equal(out.data, [3.0, -1.0])


def test_affine_zero_map():
    out = ad.affine(Tensor(np.zeros((2, 4))), Tensor([9.0, 1.0, -2.0, 0.5]), Tensor([5.0, 5.0]))
    np.testing.assert_array_equal(out.data, [5.0, 5.0])


def test_affine_matches_dot_product_loop():
    rng = np.random.default_rng(3)
    W, x, b = rng.normal(size=(3, 3)), rng.normal(size=3), rng.normal(size=3)
    expected = [b[i] + sum(W[i][j] * x[j] for j in range(3)) for i in range(3)]
    out = ad.affine(Tensor(W), Tensor(x), Tensor(b))
    np.testing.assert_allclose(out.data, expected, rtol=0, atol=1e-14)


def test_affine_shape_mismatch():
    with pytest.raises(ad.ShapeError):
        ad.affine(Tensor(np.zeros((2, 3))), Tensor(np.zeros(2)), Tensor(np.zeros(2)))


# -- GRU ------------------------------------------------------------------

def test_gru_zero_params_halves_state():
    d = 4
    p = {k: Tensor(np.zeros((d, d) if k[0] in "WU" else d)) for k in ad.GRU_KEYS}
    h = Tensor([1.0, -2.0, 0.5, 3.0])
    out = ad.gru_cell(h, Tensor(np.ones(d)), p)
    np.testing.assert_allclose(out.data, 0.5 * h.data, rtol=0, atol=1e-15)


def test_gru_closed_update_gate_keeps_state():
    d = 3
    p = {k: Tensor(np.zeros((d, d) if k[0] in "WU" else d)) for k in ad.GRU_KEYS}
    p["bu"] = Tensor(np.full(d, -800.0))
    h = Tensor([0.3, -0.7, 2.0])
    out = ad.gru_cell(h, Tensor([5.0, 5.0, 5.0]), p)
    np.testing.assert_array_equal(out.data, h.data)


def _gru_scalar(h, a, P):
    d = len(h)

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    def lin(W, U, b, x, y, i):
        return b[i] + sum(W[i][j] * x[j] for j in range(d)) + sum(U[i][j] * y[j] for j in range(d))

    r = [sig(lin(P["Wr"], P["Ur"], P["br"], a, h, i)) for i in range(d)]
    u = [sig(lin(P["Wu"], P["Uu"], P["bu"], a, h, i)) for i in range(d)]
    rh = [r[i] * h[i] for i in range(d)]
    c = [math.tanh(lin(P["Wc"], P["Uc"], P["bc"], a, rh, i)) for i in range(d)]
    return [(1 - u[i]) * h[i] + u[i] * c[i] for i in range(d)]


@pytest.mark.parametrize("seed", range(5))
def test_gru_matches_scalar_evaluation(seed):
    rng = np.random.default_rng(seed)
    p = _gru_params(rng, 3)
    h, a = rng.normal(size=3), rng.normal(size=3)
    expected = _gru_scalar(h.tolist(), a.tolist(), {k: v.data.tolist() for k, v in p.items()})
    np.testing.assert_allclose(ad.gru_cell(Tensor(h), Tensor(a), p).data, expected,
                               rtol=0, atol=1e-14)
    rows = ad.gru_cell(Tensor(np.stack([h, a])), Tensor(np.stack([a, h])), p)
    np.testing.assert_allclose(rows.data[0], expected, rtol=0, atol=1e-14)


def test_gru_dimension_mismatch():
    p = _gru_params(np.random.default_rng(0), 3)
    with pytest.raises(ad.ShapeError):
        ad.gru_cell(Tensor(np.zeros(3)), Tensor(np.zeros(2)), p)


# -- log-softmax / Gaussian -----------------------------------------------

def test_log_softmax_uniform():
    np.testing.assert_allclose(ad.log_softmax(Tensor([0.0, 0.0])).data, [-math.log(2)] * 2,
                               rtol=0, atol=1e-16)


def test_log_softmax_large_logit_is_stable():
    out = ad.log_softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(out))
    assert abs(out[0]) < 1e-300 or out[0] == 0.0
    assert out[1] == pytest.approx(-1000.0, abs=1e-12)


def test_log_softmax_extended_precision():
    mpmath.mp.dps = 50
    lse = mpmath.log(sum(mpmath.e ** k for k in (1, 2, 3)))
    expected = [float(k - lse) for k in (1, 2, 3)]
    np.testing.assert_allclose(ad.log_softmax(Tensor([1.0, 2.0, 3.0])).data, expected,
                               rtol=1e-15, atol=0)


def test_log_softmax_empty():
    with pytest.raises(ad.ShapeError):
        ad.log_softmax(Tensor(np.zeros(0)))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-700, 700), min_size=1, max_size=12))
def test_log_softmax_normalises(logits):
    out = ad.log_softmax(Tensor(logits)).data
    assert abs(math.fsum(np.exp(out)) - 1.0) <= 1e-12


def test_gaussian_logpdf_analytic():
    base = -2.5 * math.log(2 * math.pi)
    assert ad.gaussian_logpdf(Tensor(np.zeros(5))).item() == pytest.approx(-4.594692666, abs=1e-9)
    assert ad.gaussian_logpdf(Tensor(np.zeros(5))).item() == pytest.approx(base, abs=1e-15)
    assert ad.gaussian_logpdf(Tensor([1.0, 0, 0, 0, 0])).item() == pytest.approx(base - 0.5,
                                                                                  abs=1e-15)


def test_gaussian_logpdf_extended_precision():
    mpmath.mp.dps = 50
    z = np.random.default_rng(11).normal(size=5)
    expected = -mpmath.mpf(5) / 2 * mpmath.log(2 * mpmath.pi) - sum(mpmath.mpf(v) ** 2 for v in z) / 2
    assert ad.gaussian_logpdf(Tensor(z)).item() == pytest.approx(float(expected), abs=1e-14)


def test_gaussian_logpdf_rejects_nonfinite():
    with pytest.raises(ValueError):
        ad.gaussian_logpdf(Tensor([0.0, float("nan")]))


# -- backward --------------------------------------------------------------

def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    with Tape() as tape:
        y = x * x
    assert ad.backward(y, tape, wrt=[x])[0] == 6.0


def test_backward_constant_root_gives_zero():
    store = ParamStore()
    store.add("phi/w", np.ones(3))
    with Tape() as tape:
        root = ad.constant(2.0)
    grads = ad.backward(root, tape, store)
    np.testing.assert_array_equal(grads["phi/w"], np.zeros(3))


def test_backward_requires_scalar_root():
    x = Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        y = ad.tanh(x)
    with pytest.raises(ad.ShapeError):
        ad.backward(y, tape)


def test_unreachable_parameter_gets_zero():
    store = ParamStore()
    a = store.add("phi/a", [1.0, 2.0])
    store.add("theta/b", [3.0])
    with Tape() as tape:
        root = ad.total(ad.mul(a, a))
    grads = ad.backward(root, tape, store)
    np.testing.assert_array_equal(grads["phi/a"], [2.0, 4.0])
    np.testing.assert_array_equal(grads["theta/b"], [0.0])


def test_gradients_accumulate_over_reuse():
    store = ParamStore()
    w = store.add("theta/w", [0.5])
    with Tape() as tape:
        h = ad.constant([2.0])
        for _ in range(3):
            h = ad.mul(w, h)
        root = ad.total(h)
    # root = 2 w^3 -> 6 w^2
    assert ad.backward(root, tape, store)["theta/w"][0] == pytest.approx(6 * 0.25, abs=1e-15)


def test_no_tape_records_nothing():
    x = Tensor(1.0, requires_grad=True)
    y = ad.tanh(x)
    assert not y.requires_grad


def _composite_loss(params, x, h0):
    h = Tensor(h0)
    a = ad.mlp(params.group("phi/msg"), Tensor(x))
    for _ in range(2):
        h = ad.gru_cell(h, a, params.group("phi/gru"))
    logp = ad.log_softmax(ad.affine(params["phi/out/W"], h, params["phi/out/b"]))
    return ad.add_n([ad.pick(logp, 1), ad.gaussian_logpdf(h), ad.total(ad.log_sigmoid(h))])


@pytest.mark.parametrize("seed", range(3))
def test_composite_mlp_gru_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    d = 3
    store.add("phi/msg/W1", rng.normal(size=(4, 2)))
    store.add("phi/msg/b1", rng.normal(size=4))
    store.add("phi/msg/W2", rng.normal(size=(d, 4)))
    store.add("phi/msg/b2", rng.normal(size=d))
    for k in ad.GRU_KEYS:
        store.add(f"phi/gru/{k}", rng.normal(size=(d, d) if k[0] in "WU" else d))
    store.add("phi/out/W", rng.normal(size=(4, d)))
    store.add("phi/out/b", rng.normal(size=4))
    x, h0 = rng.normal(size=2), rng.normal(size=d)
    with Tape() as tape:
        loss = _composite_loss(store, x, h0)
    grads = ad.backward(loss, tape, store)
    names = list(store)
    numeric = fd_arrays(lambda: _composite_loss(store, x, h0).item(),
                        [store[n].data for n in names])
    for n, g in zip(names, numeric):
        assert rel_err(grads[n], g).max() <= 1e-4, n


def test_replay_is_bit_identical():
    rng = np.random.default_rng(5)
    p = _gru_params(rng, 4)
    h, a = rng.normal(size=4), rng.normal(size=4)
    outs = [ad.gru_cell(Tensor(h), Tensor(a), p).data.tobytes() for _ in range(3)]
    assert len(set(outs)) == 1


# -- Adam -----------------------------------------------------------------

def test_adam_first_step_is_lr_times_sign():
    store = ParamStore()
    store.add("theta/x", [1.0, -2.0, 3.0])
    g = np.array([0.3, -5.0, 1e-3])
    ad.adam_step(store, {"theta/x": g}, AdamState(lr=0.01))
    np.testing.assert_allclose(store["theta/x"].data - [1.0, -2.0, 3.0], -0.01 * np.sign(g),
                               rtol=1e-4)


def test_adam_zero_gradient_leaves_params():
    store = ParamStore()
    store.add("theta/x", [1.0, -2.0])
    ad.adam_step(store, {"theta/x": np.zeros(2)}, AdamState())
    np.testing.assert_array_equal(store["theta/x"].data, [1.0, -2.0])


def test_adam_key_mismatch():
    store = ParamStore()
    store.add("theta/x", [1.0])
    with pytest.raises(KeyError):
        ad.adam_step(store, {"theta/y": np.zeros(1)}, AdamState())


def test_adam_quadratic_matches_scalar_simulation():
    store = ParamStore()
    store.add("theta/x", [1.0])
    state = AdamState(lr=0.01)
    xs = [1.0]
    # independent scalar Adam
    x, m, v = 1.0, 0.0, 0.0
    ref = [1.0]
    for t in range(1, 51):
        ad.adam_step(store, {"theta/x": 2.0 * store["theta/x"].data}, state)
        xs.append(float(store["theta/x"].data[0]))
        g = 2 * x
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x -= 0.01 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        ref.append(x)
    np.testing.assert_allclose(xs, ref, rtol=0, atol=1e-14)
    windows = [abs(xs[i]) for i in range(0, 51, 10)]
    assert all(a > b for a, b in zip(windows, windows[1:]))
    assert state.step == 50


# -- ParamStore / checkpoint ------------------------------------------------

def test_paramstore_namespaces():
    store = ParamStore()
    store.add("phi/a", [1.0])
    store.add("theta/b/c", [2.0])
    assert store.names("phi") == ["phi/a"]
    assert store.names("theta") == ["theta/b/c"]
    with pytest.raises(KeyError):
        store.add("phi/a", [0.0])
    with pytest.raises(KeyError):
        store.add("psi/a", [0.0])


def test_checkpoint_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    store = ParamStore()
    store.add("phi/w", rng.normal(size=(3, 4)) * 1e-7)
    store.add("theta/b", [1 / 3, math.pi, -0.0, 5e-324])
    path = tmp_path / "ck.json"
    ad.save_checkpoint(store, path)
    loaded = ad.load_checkpoint(path)
    for name in store:
        assert loaded[name].data.tobytes() == store[name].data.tobytes()
    obj = json.loads(path.read_text())
    assert obj["format_version"] == 1
    assert obj["params"]["phi/w"]["shape"] == [3, 4]


@pytest.mark.parametrize("payload, field", [
    ("not json", "<root>"),
    ('{"format_version": 2, "params": {}}', "format_version"),
    ('{"format_version": 1}', "params"),
    ('{"format_version": 1, "params": {"phi/w": {"shape": [2], "data": [1.0]}}}', "phi/w"),
])
def test_corrupt_checkpoint_names_field(tmp_path, payload, field):
    path = tmp_path / "bad.json"
    path.write_text(payload)
    with pytest.raises(ad.CheckpointError) as info:
        ad.load_checkpoint(path)
    assert info.value.field == field
