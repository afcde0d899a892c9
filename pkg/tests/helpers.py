"""Finite-difference oracle and small fixtures shared by the test modules."""

import numpy as np

from seqgvae.model import ModelConfig, init_params

EPS = 1e-2


def rel_err(analytic, numeric):
    a, b = np.asarray(analytic, float), np.asarray(numeric, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def fd_arrays(f, arrays, eps=EPS):
    """Central differences of scalar ``f()`` w.r.t. every entry of every array.

    Richardson-extrapolated over steps ``eps, eps/2, eps/4`` (truncation
    O(eps^6)). The large base step keeps roundoff near 1e-15 * |f| / eps,
    which matters for gradient entries around 1e-8 where the relative-error
    denominator bottoms out. Arrays are perturbed in place and restored.
    """
    out = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            d = []
            for h in (eps, eps / 2, eps / 4):
                flat[i] = old + h
                hi = f()
                flat[i] = old - h
                lo = f()
                d.append((hi - lo) / (2 * h))
            flat[i] = old
            r1 = (4 * d[1] - d[0]) / 3
            r2 = (4 * d[2] - d[1]) / 3
            gflat[i] = (16 * r2 - r1) / 15
        out.append(g)
    return out


def fd_params(f, params, names=None, eps=EPS):
    names = list(params) if names is None else names
    grads = fd_arrays(f, [params[n].data for n in names], eps)
    return dict(zip(names, grads))


def tiny_config(**kw):
    base = dict(d=2, d_e=2, d_g=2, rounds=1, hidden=3, node_types=1, edge_types=1)
    base.update(kw)
    return ModelConfig(**base)


def tiny_params(seed, **kw):
    return init_params(tiny_config(**kw), np.random.default_rng(seed))
