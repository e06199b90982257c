# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``.

Row-major products are mapped onto column-major dgemm by computing the
transposed product; see ``_gemm_rm``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "cython"


cdef void _gemm_rm(char ta, char tb, int m, int n, int k,
                   double* a, int lda, double* b, int ldb,
                   double* c, int ldc) noexcept nogil:
    # row-major C(m x n) = op(A) op(B)  <=>  column-major C' = op(B)' op(A)'
    cdef double one = 1.0
    cdef double zero = 0.0
    dgemm(&tb, &ta, &n, &m, &k, &one, b, &ldb, a, &lda, &zero, c, &ldc)


def mlp_forward(list weights, list biases, cnp.ndarray x):
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t i, r, c
    cdef int rows = <int>x.shape[0]
    cdef int din, dout
    cdef double[:, ::1] a_in
    cdef double[:, ::1] W
    cdef double[:, ::1] h
    cdef double[::1] b
    cdef double v
    acts = [x]
    a_in = x
    for i in range(n_layers):
        W = weights[i]
        din = <int>W.shape[0]
        dout = <int>W.shape[1]
        out = np.empty((rows, dout), dtype=np.float64)
        h = out
        _gemm_rm(b'N', b'N', rows, dout, din, &a_in[0, 0], din, &W[0, 0], dout, &h[0, 0], dout)
        if biases[i] is not None:
            b = biases[i]
            for r in range(rows):
                for c in range(dout):
                    h[r, c] += b[c]
        if i < n_layers - 1:
            for r in range(rows):
                for c in range(dout):
                    v = h[r, c]
                    if v < 0.0:
                        h[r, c] = 0.0
        acts.append(out)
        a_in = h
    return acts


def mlp_backward(list weights, list acts, cnp.ndarray upstream):
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t i, r, c
    cdef int rows = <int>upstream.shape[0]
    cdef int din, dout
    cdef double[:, ::1] W
    cdef double[:, ::1] a_in
    cdef double[:, ::1] delta = upstream
    cdef double[:, ::1] gw
    cdef double[:, ::1] dx
    cdef double[::1] gb
    cdef double s
    wgrads = [None] * n_layers
    bgrads = [None] * n_layers
    delta_obj = upstream
    for i in range(n_layers - 1, -1, -1):
        W = weights[i]
        a_in = acts[i]
        din = <int>W.shape[0]
        dout = <int>W.shape[1]
        gw_obj = np.empty((din, dout), dtype=np.float64)
        gw = gw_obj
        # dW = a_in' @ delta
        _gemm_rm(b'T', b'N', din, dout, rows, &a_in[0, 0], din, &delta[0, 0], dout, &gw[0, 0], dout)
        gb_obj = np.empty(dout, dtype=np.float64)
        gb = gb_obj
        for c in range(dout):
            s = 0.0
            for r in range(rows):
                s += delta[r, c]
            gb[c] = s
        dx_obj = np.empty((rows, din), dtype=np.float64)
        dx = dx_obj
        # dx = delta @ W'
        _gemm_rm(b'N', b'T', rows, din, dout, &delta[0, 0], dout, &W[0, 0], dout, &dx[0, 0], din)
        if i > 0:
            for r in range(rows):
                for c in range(din):
                    if not (a_in[r, c] > 0.0):
                        dx[r, c] = 0.0
        wgrads[i] = gw_obj
        bgrads[i] = gb_obj
        delta = dx
        delta_obj = dx_obj
    return wgrads, bgrads, delta_obj


def softmax_rows(double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], k = z.shape[1], r, c
    cdef double m, s
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] p = out
    for r in range(n):
        m = z[r, 0]
        for c in range(1, k):
            if z[r, c] > m:
                m = z[r, c]
        s = 0.0
        for c in range(k):
            p[r, c] = exp(z[r, c] - m)
            s += p[r, c]
        for c in range(k):
            p[r, c] /= s
    return out


def xent_rows(double[:, ::1] z, y):
    cdef Py_ssize_t n = z.shape[0], k = z.shape[1], r, c
    cdef long[::1] yy = np.ascontiguousarray(y, dtype=np.int64)
    cdef double m, s
    losses_obj = np.empty(n, dtype=np.float64)
    grad_obj = np.empty((n, k), dtype=np.float64)
    cdef double[::1] losses = losses_obj
    cdef double[:, ::1] g = grad_obj
    for r in range(n):
        m = z[r, 0]
        for c in range(1, k):
            if z[r, c] > m:
                m = z[r, c]
        s = 0.0
        for c in range(k):
            g[r, c] = exp(z[r, c] - m)
            s += g[r, c]
        losses[r] = log(s) - (z[r, yy[r]] - m)
        for c in range(k):
            g[r, c] /= s
        g[r, yy[r]] -= 1.0
    return losses_obj, grad_obj


def soft_xent_rows(double[:, ::1] z, double[:, ::1] target):
    cdef Py_ssize_t n = z.shape[0], k = z.shape[1], r, c
    cdef double m, s, logs, acc
    losses_obj = np.empty(n, dtype=np.float64)
    grad_obj = np.empty((n, k), dtype=np.float64)
    cdef double[::1] losses = losses_obj
    cdef double[:, ::1] g = grad_obj
    for r in range(n):
        m = z[r, 0]
        for c in range(1, k):
            if z[r, c] > m:
                m = z[r, c]
        s = 0.0
        for c in range(k):
            g[r, c] = exp(z[r, c] - m)
            s += g[r, c]
        logs = log(s)
        acc = 0.0
        for c in range(k):
            acc -= target[r, c] * (z[r, c] - m - logs)
            g[r, c] = g[r, c] / s - target[r, c]
        losses[r] = acc
    return losses_obj, grad_obj


cdef double _residual(double[:, ::1] P, double[::1] q, double[::1] v,
                      double[::1] grad, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s, proj, worst = 0.0
    for i in range(k):
        s = q[i]
        for j in range(k):
            s += P[i, j] * v[j]
        grad[i] = s
        proj = v[i] - s
        if proj < 0.0:
            proj = 0.0
        proj = fabs(v[i] - proj)
        if proj > worst:
            worst = proj
    return worst


def qp_dual_pg(double[:, ::1] P, double[::1] q, double step, int max_iters, double tol):
    cdef Py_ssize_t k = q.shape[0], i
    cdef int it
    v_obj = np.zeros(k, dtype=np.float64)
    cdef double[::1] v = v_obj
    cdef double[::1] grad = np.empty(k, dtype=np.float64)
    cdef double resid
    cdef double nv
    with nogil:
        for it in range(1, max_iters + 1):
            resid = _residual(P, q, v, grad, k)
            if resid < tol:
                break
            for i in range(k):
                nv = v[i] - step * grad[i]
                v[i] = nv if nv > 0.0 else 0.0
        else:
            it = max_iters + 1
    if it <= max_iters:
        return v_obj, it - 1, True
    resid = _residual(P, q, v, grad, k)
    return v_obj, max_iters, bool(resid < tol)
