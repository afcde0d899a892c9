"""Pure numpy versions of the dense kernels in ``_ckernels.pyx``.

Same signatures and return layouts; used when the compiled module is
unavailable or ``SEQGVAE_PURE_PYTHON`` is set.
"""

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def affine_forward(X, W, b):
    return X @ W.T + b


def affine_backward(dY, X, W):
    return dY @ W, dY.T @ X, dY.sum(axis=0)


def gru_forward(H, A, Wr, Ur, br, Wu, Uu, bu, Wc, Uc, bc):
    R = _sigmoid(A @ Wr.T + H @ Ur.T + br)
    U = _sigmoid(A @ Wu.T + H @ Uu.T + bu)
    C = np.tanh(A @ Wc.T + (R * H) @ Uc.T + bc)
    Hn = (1.0 - U) * H + U * C
    return Hn, R, U, C


def gru_backward(dHn, H, A, R, U, C, Wr, Ur, Wu, Uu, Wc, Uc):
    gc = dHn * U * (1.0 - C * C)
    gu = dHn * (C - H) * U * (1.0 - U)
    dH = dHn * (1.0 - U)
    rh = R * H
    grh = gc @ Uc
    gr = grh * H * R * (1.0 - R)
    dH = dH + grh * R + gr @ Ur + gu @ Uu
    dA = gc @ Wc + gr @ Wr + gu @ Wu
    return (dH, dA,
            gr.T @ A, gr.T @ H, gr.sum(axis=0),
            gu.T @ A, gu.T @ H, gu.sum(axis=0),
            gc.T @ A, gc.T @ rh, gc.sum(axis=0))


def scatter_add(M, idx, n):
    out = np.zeros((n, M.shape[1]))
    np.add.at(out, idx, M)
    return out


def log_softmax_rows(X):
    mx = X.max(axis=1, keepdims=True)
    shifted = X - mx
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def mlp_forward(X, W1, b1, W2, b2):
    hid = np.tanh(X @ W1.T + b1)
    return hid @ W2.T + b2, hid


def mlp_backward(dY, X, hid, W1, W2):
    dh = (dY @ W2) * (1.0 - hid * hid)
    return dh @ W1, dh.T @ X, dh.sum(axis=0), dY.T @ hid, dY.sum(axis=0)
