"""Minimal tape-based reverse-mode autodiff over small dense float64 tensors.

Operations run eagerly. Inside ``with Tape() as tape:`` every operation with
at least one gradient-requiring input is appended to the tape together with
its local backward rule; :func:`backward` replays the records in exact
reverse order. Outside a tape, operations are plain forward evaluation.
"""

import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from . import kernels as _k

LOG_2PI = math.log(2.0 * math.pi)

_state = threading.local()


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data.copy()

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor({self.data!r}{tag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


def _wrap(arr, requires_grad=False):
    t = Tensor.__new__(Tensor)
    t.data = arr
    t.requires_grad = requires_grad
    t.name = None
    return t


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data):
    return Tensor(data)


class Tape:
    """Ordered record of operations; usable as a context manager."""

    def __init__(self):
        self.records = []

    def __enter__(self):
        stack = getattr(_state, "stack", None)
        if stack is None:
            stack = _state.stack = []
        stack.append(self)
        _state.tape = self
        return self

    def __exit__(self, *exc):
        stack = _state.stack
        stack.pop()
        _state.tape = stack[-1] if stack else None
        return False

    def __len__(self):
        return len(self.records)

    def gradients(self, root):
        """Map ``id(tensor) -> gradient`` for every tensor reached from ``root``."""
        if root.data.shape != ():
            raise ShapeError(f"backward needs a scalar root, got shape {root.data.shape}")
        grads = {id(root): np.ones(())}
        get = grads.get
        for out, inputs, rule in reversed(self.records):
            g = get(id(out))
            if g is None:
                continue
            for x, gx in zip(inputs, rule(g)):
                if gx is None or not x.requires_grad:
                    continue
                key = id(x)
                prev = get(key)
                grads[key] = gx if prev is None else prev + gx
        return grads


def current_tape():
    return getattr(_state, "tape", None)


def _emit(data, inputs, rule):
    tape = getattr(_state, "tape", None)
    if tape is not None:
        for x in inputs:
            if x.requires_grad:
                out = _wrap(data, True)
                tape.records.append((out, inputs, rule))
                return out
    return _wrap(data)


def backward(root, tape, params=None, wrt=()):
    """Gradients of scalar ``root``.

    Returns ``{name: gradient}`` for every parameter in ``params`` (zeros for
    parameters the root does not depend on). Extra tensors in ``wrt`` are
    reported under their position as ``wrt[i]`` -> key ``i``.
    """
    grads = tape.gradients(root)
    out = {}
    if params is not None:
        for name, t in params.items():
            g = grads.get(id(t))
            out[name] = np.zeros_like(t.data) if g is None else np.asarray(g)
    for i, t in enumerate(wrt):
        g = grads.get(id(t))
        out[i] = np.zeros_like(t.data) if g is None else np.asarray(g)
    return out


# -- elementwise -----------------------------------------------------------

def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.data.shape, b.data.shape
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.data.shape, b.data.shape
    return _emit(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def scale(a, c):
    c = float(c)
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def add_n(terms):
    """Sum of same-shape tensors, accumulated left to right."""
    terms = tuple(terms)
    if not terms:
        raise ShapeError("add_n needs at least one term")
    acc = terms[0].data
    for t in terms[1:]:
        acc = acc + t.data
    return _emit(acc, terms, lambda g: (g,) * len(terms))


def sigmoid(x):
    y = _stable_sigmoid(x.data)
    return _emit(y, (x,), lambda g: (g * y * (1.0 - y),))


def _stable_sigmoid(v):
    return np.exp(-np.logaddexp(0.0, -v))


def tanh(x):
    y = np.tanh(x.data)
    return _emit(y, (x,), lambda g: (g * (1.0 - y * y),))


def exp(x):
    y = np.exp(x.data)
    return _emit(y, (x,), lambda g: (g * y,))


def log_sigmoid(x):
    """log(sigmoid(x)) without overflow."""
    v = x.data
    y = -np.logaddexp(0.0, -v)
    return _emit(y, (x,), lambda g: (g * _stable_sigmoid(-v),))


def log_softmax(x):
    """Max-shifted log-softmax over the last axis (vector or rows)."""
    v = x.data
    if v.size == 0 or v.shape[-1] == 0:
        raise ShapeError("log_softmax of an empty tensor")
    if v.ndim == 1:
        y = _k.log_softmax_rows(v.reshape(1, -1))[0]
    elif v.ndim == 2:
        y = _k.log_softmax_rows(v)
    else:
        raise ShapeError(f"log_softmax expects 1-D or 2-D input, got {v.shape}")

    def rule(g):
        p = np.exp(y)
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _emit(y, (x,), rule)


def gaussian_logpdf(z):
    """Unit-Gaussian log density of vector ``z``."""
    v = z.data
    if v.ndim != 1:
        raise ShapeError(f"gaussian_logpdf expects a vector, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("gaussian_logpdf of non-finite input")
    y = np.array(-0.5 * v.size * LOG_2PI - 0.5 * float(v @ v))
    return _emit(y, (z,), lambda g: (-g * v,))


# -- linear blocks ---------------------------------------------------------

def affine(W, x, b):
    """``W @ x + b`` for a vector ``x`` or row-wise for a matrix of rows."""
    Wd, xd, bd = W.data, x.data, b.data
    if Wd.ndim != 2 or bd.shape != (Wd.shape[0],) or xd.ndim not in (1, 2) \
            or xd.shape[-1] != Wd.shape[1]:
        raise ShapeError(f"affine: W{Wd.shape} x{xd.shape} b{bd.shape} do not conform")
    vec = xd.ndim == 1
    X = xd.reshape(1, -1) if vec else xd
    Y = _k.affine_forward(X, Wd, bd)

    def rule(g):
        G = np.ascontiguousarray(g.reshape(1, -1) if vec else g)
        dX, dW, db = _k.affine_backward(G, X, Wd)
        return (dW, dX[0] if vec else dX, db)

    return _emit(Y[0] if vec else Y, (W, x, b), rule)


GRU_KEYS = ("Wr", "Ur", "br", "Wu", "Uu", "bu", "Wc", "Uc", "bc")


def gru_cell(h, a, params):
    """Standard GRU update of state ``h`` from input ``a`` (vectors or rows).

    ``params`` maps the names in :data:`GRU_KEYS` to tensors.
    """
    hd, ad = h.data, a.data
    if hd.shape != ad.shape:
        raise ShapeError(f"gru_cell: state {hd.shape} and input {ad.shape} differ")
    ws = [params[key] for key in GRU_KEYS]
    d = hd.shape[-1]
    if ws[0].data.shape != (d, d):
        raise ShapeError(f"gru_cell: weights {ws[0].data.shape} vs state width {d}")
    vec = hd.ndim == 1
    H = hd.reshape(1, -1) if vec else hd
    A = ad.reshape(1, -1) if vec else ad
    wd = [w.data for w in ws]
    Hn, R, U, C = _k.gru_forward(H, A, *wd)

    def rule(g):
        G = np.ascontiguousarray(g.reshape(1, -1) if vec else g)
        out = _k.gru_backward(G, H, A, R, U, C, wd[0], wd[1], wd[3], wd[4], wd[6], wd[7])
        if vec:
            return (out[0][0], out[1][0]) + tuple(out[2:])
        return out

    return _emit(Hn[0] if vec else Hn, (h, a, *ws), rule)


def mlp(params, x):
    """Two-layer perceptron ``W2 tanh(W1 x + b1) + b2`` as one fused op."""
    W1, b1, W2, b2 = params["W1"], params["b1"], params["W2"], params["b2"]
    xd = x.data
    if xd.shape[-1] != W1.data.shape[1]:
        raise ShapeError(f"mlp: input width {xd.shape[-1]} != {W1.data.shape[1]}")
    vec = xd.ndim == 1
    X = xd.reshape(1, -1) if vec else xd
    w1, w2 = W1.data, W2.data
    Y, hid = _k.mlp_forward(X, w1, b1.data, w2, b2.data)

    def rule(g):
        G = np.ascontiguousarray(g.reshape(1, -1) if vec else g)
        dX, dW1, db1, dW2, db2 = _k.mlp_backward(G, X, hid, w1, w2)
        return (dX[0] if vec else dX, dW1, db1, dW2, db2)

    return _emit(Y[0] if vec else Y, (x, W1, b1, W2, b2), rule)


# -- structural ------------------------------------------------------------

def reshape(x, shape):
    src = x.data.shape
    return _emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def concat(tensors, axis=-1):
    """Join along the last axis (vectors or row blocks), or stack row blocks with ``axis=0``."""
    tensors = tuple(tensors)
    arrays = [t.data for t in tensors]
    y = np.concatenate(arrays, axis=axis)
    bounds = []
    start = 0
    for a in arrays:
        stop = start + a.shape[axis]
        bounds.append((start, stop))
        start = stop
    if axis == 0:
        return _emit(y, tensors, lambda g: tuple(g[a:b] for a, b in bounds))
    return _emit(y, tensors, lambda g: tuple(g[..., a:b] for a, b in bounds))


def stack(tensors):
    tensors = tuple(tensors)
    y = np.stack([t.data for t in tensors])
    return _emit(y, tensors, lambda g: tuple(g))


def take_rows(x, idx):
    idx = np.asarray(idx, dtype=np.int64)
    n = x.data.shape[0]
    y = x.data[idx]
    return _emit(y, (x,), lambda g: (_k.scatter_add(np.ascontiguousarray(g), idx, n),))


def row(x, i):
    n, d = x.data.shape

    def rule(g):
        out = np.zeros((n, d))
        out[i] = g
        return (out,)

    return _emit(x.data[i].copy(), (x,), rule)


def repeat_row(v, n):
    """``n`` copies of vector ``v`` stacked as rows."""
    y = np.tile(v.data, (n, 1))
    return _emit(y, (v,), lambda g: (g.sum(axis=0),))


def scatter_add(m, idx, n):
    """Row ``i`` of ``m`` added into output row ``idx[i]`` (ascending ``i``)."""
    idx = np.asarray(idx, dtype=np.int64)
    y = _k.scatter_add(m.data, idx, n)
    return _emit(y, (m,), lambda g: (g[idx],))


def sum_rows(x):
    return _emit(x.data.sum(axis=0), (x,), lambda g: (np.broadcast_to(g, x.data.shape).copy(),))


def total(x):
    shape = x.data.shape
    return _emit(np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def pick(x, idx):
    """``x[idx]`` for a vector, or ``x[r, idx[r]]`` per row for a matrix."""
    v = x.data
    if v.ndim == 1:
        i = int(idx)

        def rule(g):
            out = np.zeros_like(v)
            out[i] = g
            return (out,)

        return _emit(np.array(v[i]), (x,), rule)
    cols = np.asarray(idx, dtype=np.int64)
    rows = np.arange(v.shape[0])

    def rule2(g):
        out = np.zeros_like(v)
        out[rows, cols] = g
        return (out,)

    return _emit(v[rows, cols], (x,), rule2)


# -- parameters ------------------------------------------------------------

NAMESPACES = ("phi", "theta")


class ParamStore:
    """Named learnable tensors split into ``phi/*`` (encoder) and ``theta/*`` (decoder)."""

    def __init__(self):
        self._params = {}
        self._groups = {}

    def add(self, name, data):
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        if name.split("/", 1)[0] not in NAMESPACES or "/" not in name:
            raise KeyError(f"parameter {name!r} is outside the phi/ and theta/ namespaces")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        self._groups.clear()
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, namespace=None):
        if namespace is None:
            return list(self._params)
        return [n for n in self._params if n.startswith(namespace + "/")]

    def group(self, prefix):
        """Tensors under ``prefix/`` keyed by the remaining name."""
        cached = self._groups.get(prefix)
        if cached is None:
            head = prefix + "/"
            cached = {n[len(head):]: t for n, t in self._params.items() if n.startswith(head)}
            self._groups[prefix] = cached
        return cached

    def has_group(self, prefix):
        return bool(self.group(prefix))

    def arrays(self):
        return {n: t.data.copy() for n, t in self._params.items()}

    def assign(self, arrays):
        for name, value in arrays.items():
            t = self._params[name]
            value = np.asarray(value, dtype=np.float64)
            if value.shape != t.data.shape:
                raise ShapeError(f"{name}: shape {value.shape} != {t.data.shape}")
            t.data = np.ascontiguousarray(value).copy()

    def copy(self):
        other = ParamStore()
        for n, t in self._params.items():
            other.add(n, t.data.copy())
        return other

    def num_values(self):
        return sum(t.data.size for t in self._params.values())


def glorot(rng, shape):
    fan_out, fan_in = shape
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# -- optimizer -------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """One bias-corrected Adam update of ``params`` in place (returned for chaining)."""
    if set(grads) != set(params):
        missing = sorted(set(params) ^ set(grads))
        raise KeyError(f"gradient keys do not match parameters: {missing[:5]}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        else:
            v = state.v[name]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# -- checkpoints -----------------------------------------------------------

FORMAT_VERSION = 1


def checkpoint_dict(params):
    out = {}
    for name, t in params.items():
        data = t.data.ravel().tolist()
        if not all(math.isfinite(x) for x in data):
            raise ValueError(f"parameter {name} has non-finite values")
        out[name] = {"shape": list(t.data.shape), "data": data}
    return {"format_version": FORMAT_VERSION, "params": out}


def save_checkpoint(params, path):
    with open(path, "w") as fh:
        json.dump(checkpoint_dict(params), fh)
        fh.write("\n")


def params_from_dict(obj):
    if not isinstance(obj, dict):
        raise CheckpointError("checkpoint is not a JSON object", "<root>")
    if obj.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {obj.get('format_version')!r}",
                              "format_version")
    entries = obj.get("params")
    if not isinstance(entries, dict):
        raise CheckpointError("missing params object", "params")
    store = ParamStore()
    for name, entry in entries.items():
        try:
            shape = [int(s) for s in entry["shape"]]
            data = np.array(entry["data"], dtype=np.float64)
            data = data.reshape(shape)
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"bad entry for {name}: {exc}", name) from exc
        try:
            store.add(name, data)
        except KeyError as exc:
            raise CheckpointError(str(exc), name) from exc
    return store


def load_checkpoint(path):
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: not valid JSON ({exc})", "<root>") from exc
    return params_from_dict(obj)
