# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled dense kernels for small float64 blocks.

Mirrors :mod:`seqgvae._pykernels` function for function. All array
arguments are C-contiguous float64 (index arrays int64).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh, log

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    cdef double e = exp(x)
    return e / (1.0 + e)


def affine_forward(const double[:, ::1] X, const double[:, ::1] W, const double[::1] b):
    cdef Py_ssize_t n = X.shape[0], k = X.shape[1], m = W.shape[0]
    cdef Py_ssize_t i, j, t
    cdef double acc
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] Y = out
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = b[j]
                for t in range(k):
                    acc = acc + W[j, t] * X[i, t]
                Y[i, j] = acc
    return out


def affine_backward(const double[:, ::1] dY, const double[:, ::1] X, const double[:, ::1] W):
    cdef Py_ssize_t n = X.shape[0], k = X.shape[1], m = W.shape[0]
    cdef Py_ssize_t i, j, t
    cdef double g
    dX_arr = np.zeros((n, k), dtype=np.float64)
    dW_arr = np.zeros((m, k), dtype=np.float64)
    db_arr = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] dX = dX_arr
    cdef double[:, ::1] dW = dW_arr
    cdef double[::1] db = db_arr
    with nogil:
        for i in range(n):
            for j in range(m):
                g = dY[i, j]
                if g == 0.0:
                    continue
                db[j] += g
                for t in range(k):
                    dX[i, t] += g * W[j, t]
                    dW[j, t] += g * X[i, t]
    return dX_arr, dW_arr, db_arr


cdef void _matvec_rows(const double[:, ::1] X, const double[:, ::1] W,
                       double[:, ::1] out, bint accumulate) noexcept nogil:
    # out[i, j] (+)= sum_t W[j, t] * X[i, t]
    cdef Py_ssize_t n = X.shape[0], k = X.shape[1], m = W.shape[0]
    cdef Py_ssize_t i, j, t
    cdef double acc
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc = acc + W[j, t] * X[i, t]
            if accumulate:
                out[i, j] += acc
            else:
                out[i, j] = acc


def gru_forward(const double[:, ::1] H, const double[:, ::1] A,
                const double[:, ::1] Wr, const double[:, ::1] Ur, const double[::1] br,
                const double[:, ::1] Wu, const double[:, ::1] Uu, const double[::1] bu,
                const double[:, ::1] Wc, const double[:, ::1] Uc, const double[::1] bc):
    cdef Py_ssize_t n = H.shape[0], d = H.shape[1]
    cdef Py_ssize_t i, j
    Hn_arr = np.empty((n, d), dtype=np.float64)
    R_arr = np.empty((n, d), dtype=np.float64)
    U_arr = np.empty((n, d), dtype=np.float64)
    C_arr = np.empty((n, d), dtype=np.float64)
    RH_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] Hn = Hn_arr
    cdef double[:, ::1] R = R_arr
    cdef double[:, ::1] U = U_arr
    cdef double[:, ::1] C = C_arr
    cdef double[:, ::1] RH = RH_arr
    with nogil:
        _matvec_rows(A, Wr, R, False)
        _matvec_rows(H, Ur, R, True)
        _matvec_rows(A, Wu, U, False)
        _matvec_rows(H, Uu, U, True)
        for i in range(n):
            for j in range(d):
                R[i, j] = _sigmoid(R[i, j] + br[j])
                U[i, j] = _sigmoid(U[i, j] + bu[j])
                RH[i, j] = R[i, j] * H[i, j]
        _matvec_rows(A, Wc, C, False)
        _matvec_rows(RH, Uc, C, True)
        for i in range(n):
            for j in range(d):
                C[i, j] = tanh(C[i, j] + bc[j])
                Hn[i, j] = (1.0 - U[i, j]) * H[i, j] + U[i, j] * C[i, j]
    return Hn_arr, R_arr, U_arr, C_arr


cdef void _outer_acc(const double[:, ::1] G, const double[:, ::1] X,
                     double[:, ::1] dW, double[::1] db) noexcept nogil:
    # dW += G^T X, db += sum_rows G
    cdef Py_ssize_t n = G.shape[0], m = G.shape[1], k = X.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double g
    for i in range(n):
        for j in range(m):
            g = G[i, j]
            db[j] += g
            for t in range(k):
                dW[j, t] += g * X[i, t]


cdef void _outer_acc_w(const double[:, ::1] G, const double[:, ::1] X,
                       double[:, ::1] dW) noexcept nogil:
    cdef Py_ssize_t n = G.shape[0], m = G.shape[1], k = X.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double g
    for i in range(n):
        for j in range(m):
            g = G[i, j]
            for t in range(k):
                dW[j, t] += g * X[i, t]


cdef void _back_rows(const double[:, ::1] G, const double[:, ::1] W,
                     double[:, ::1] dX) noexcept nogil:
    # dX += G W
    cdef Py_ssize_t n = G.shape[0], m = G.shape[1], k = W.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double g
    for i in range(n):
        for j in range(m):
            g = G[i, j]
            for t in range(k):
                dX[i, t] += g * W[j, t]


def gru_backward(const double[:, ::1] dHn, const double[:, ::1] H, const double[:, ::1] A,
                 const double[:, ::1] R, const double[:, ::1] U, const double[:, ::1] C,
                 const double[:, ::1] Wr, const double[:, ::1] Ur,
                 const double[:, ::1] Wu, const double[:, ::1] Uu,
                 const double[:, ::1] Wc, const double[:, ::1] Uc):
    cdef Py_ssize_t n = H.shape[0], d = H.shape[1], da = A.shape[1]
    cdef Py_ssize_t i, j
    cdef double u, c, r
    dH_arr = np.zeros((n, d), dtype=np.float64)
    dA_arr = np.zeros((n, da), dtype=np.float64)
    dWr_arr = np.zeros((d, da)); dUr_arr = np.zeros((d, d)); dbr_arr = np.zeros(d)
    dWu_arr = np.zeros((d, da)); dUu_arr = np.zeros((d, d)); dbu_arr = np.zeros(d)
    dWc_arr = np.zeros((d, da)); dUc_arr = np.zeros((d, d)); dbc_arr = np.zeros(d)
    gc_arr = np.empty((n, d)); gu_arr = np.empty((n, d))
    gr_arr = np.empty((n, d)); grh_arr = np.zeros((n, d)); rh_arr = np.empty((n, d))
    cdef double[:, ::1] dH = dH_arr
    cdef double[:, ::1] dA = dA_arr
    cdef double[:, ::1] gc = gc_arr
    cdef double[:, ::1] gu = gu_arr
    cdef double[:, ::1] gr = gr_arr
    cdef double[:, ::1] grh = grh_arr
    cdef double[:, ::1] rh = rh_arr
    cdef double[:, ::1] dWr = dWr_arr
    cdef double[:, ::1] dUr = dUr_arr
    cdef double[::1] dbr = dbr_arr
    cdef double[:, ::1] dWu = dWu_arr
    cdef double[:, ::1] dUu = dUu_arr
    cdef double[::1] dbu = dbu_arr
    cdef double[:, ::1] dWc = dWc_arr
    cdef double[:, ::1] dUc = dUc_arr
    cdef double[::1] dbc = dbc_arr
    with nogil:
        for i in range(n):
            for j in range(d):
                u = U[i, j]
                c = C[i, j]
                gc[i, j] = dHn[i, j] * u * (1.0 - c * c)
                gu[i, j] = dHn[i, j] * (c - H[i, j]) * u * (1.0 - u)
                dH[i, j] = dHn[i, j] * (1.0 - u)
                rh[i, j] = R[i, j] * H[i, j]
        _outer_acc(gc, A, dWc, dbc)
        _outer_acc_w(gc, rh, dUc)
        _back_rows(gc, Wc, dA)
        _back_rows(gc, Uc, grh)
        for i in range(n):
            for j in range(d):
                r = R[i, j]
                gr[i, j] = grh[i, j] * H[i, j] * r * (1.0 - r)
                dH[i, j] += grh[i, j] * r
        _outer_acc(gr, A, dWr, dbr)
        _outer_acc(gu, A, dWu, dbu)
        _back_rows(gr, Wr, dA)
        _back_rows(gu, Wu, dA)
        _back_rows(gr, Ur, dH)
        _back_rows(gu, Uu, dH)
        _outer_acc_w(gr, H, dUr)
        _outer_acc_w(gu, H, dUu)
    return (dH_arr, dA_arr, dWr_arr, dUr_arr, dbr_arr, dWu_arr, dUu_arr, dbu_arr,
            dWc_arr, dUc_arr, dbc_arr)


def scatter_add(const double[:, ::1] M, const cnp.int64_t[::1] idx, Py_ssize_t n):
    cdef Py_ssize_t k = M.shape[0], d = M.shape[1]
    cdef Py_ssize_t i, j, r
    out_arr = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(k):
            r = idx[i]
            for j in range(d):
                out[r, j] += M[i, j]
    return out_arr


def log_softmax_rows(const double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0], k = X.shape[1]
    cdef Py_ssize_t i, j
    cdef double mx, s, lse
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            mx = X[i, 0]
            for j in range(1, k):
                if X[i, j] > mx:
                    mx = X[i, j]
            s = 0.0
            for j in range(k):
                s = s + exp(X[i, j] - mx)
            lse = log(s)
            for j in range(k):
                out[i, j] = (X[i, j] - mx) - lse
    return out_arr


def mlp_forward(const double[:, ::1] X, const double[:, ::1] W1, const double[::1] b1,
                const double[:, ::1] W2, const double[::1] b2):
    cdef Py_ssize_t n = X.shape[0], k = X.shape[1], h = W1.shape[0], m = W2.shape[0]
    cdef Py_ssize_t i, j, t
    cdef double acc
    hid_arr = np.empty((n, h), dtype=np.float64)
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] hid = hid_arr
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(h):
                acc = b1[j]
                for t in range(k):
                    acc = acc + W1[j, t] * X[i, t]
                hid[i, j] = tanh(acc)
            for j in range(m):
                acc = b2[j]
                for t in range(h):
                    acc = acc + W2[j, t] * hid[i, t]
                out[i, j] = acc
    return out_arr, hid_arr


def mlp_backward(const double[:, ::1] dY, const double[:, ::1] X, const double[:, ::1] hid,
                 const double[:, ::1] W1, const double[:, ::1] W2):
    cdef Py_ssize_t n = X.shape[0], k = X.shape[1], h = W1.shape[0], m = W2.shape[0]
    cdef Py_ssize_t i, j, t
    cdef double g
    dX_arr = np.zeros((n, k)); dW1_arr = np.zeros((h, k)); db1_arr = np.zeros(h)
    dW2_arr = np.zeros((m, h)); db2_arr = np.zeros(m)
    dh_arr = np.zeros(h)
    cdef double[:, ::1] dX = dX_arr
    cdef double[:, ::1] dW1 = dW1_arr
    cdef double[::1] db1 = db1_arr
    cdef double[:, ::1] dW2 = dW2_arr
    cdef double[::1] db2 = db2_arr
    cdef double[::1] dh = dh_arr
    with nogil:
        for i in range(n):
            for t in range(h):
                dh[t] = 0.0
            for j in range(m):
                g = dY[i, j]
                db2[j] += g
                for t in range(h):
                    dW2[j, t] += g * hid[i, t]
                    dh[t] += g * W2[j, t]
            for t in range(h):
                g = dh[t] * (1.0 - hid[i, t] * hid[i, t])
                db1[t] += g
                for j in range(k):
                    dW1[t, j] += g * X[i, j]
                    dX[i, j] += g * W1[t, j]
    return dX_arr, dW1_arr, db1_arr, dW2_arr, db2_arr
