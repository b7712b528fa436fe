# Compiled Q-network kernels: same contract as adaptq._qnet_numpy.
# Loop ordering keeps the innermost index on contiguous memory so the
# compiler can vectorize; results match the numpy backend up to
# floating-point summation order.

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "cython"


cdef void _dense_forward(
    const double[:, ::1] X,
    const double[:, ::1] W,
    const double[::1] b,
    double[:, ::1] out,
    bint relu,
) noexcept nogil:
    cdef Py_ssize_t B = X.shape[0]
    cdef Py_ssize_t K = X.shape[1]
    cdef Py_ssize_t J = W.shape[1]
    cdef Py_ssize_t i, k, j
    cdef double xv
    for i in range(B):
        for j in range(J):
            out[i, j] = b[j]
        for k in range(K):
            xv = X[i, k]
            if xv != 0.0:
                for j in range(J):
                    out[i, j] += xv * W[k, j]
        if relu:
            for j in range(J):
                if out[i, j] < 0.0:
                    out[i, j] = 0.0


def forward(X, W1, b1, W2, b2, W3, b3):
    """Batched forward pass; returns post-ReLU activations and q-values."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] W1v = W1, W2v = W2, W3v = W3
    cdef double[::1] b1v = b1, b2v = b2, b3v = b3
    H1 = np.empty((Xv.shape[0], W1v.shape[1]), dtype=np.float64)
    H2 = np.empty((Xv.shape[0], W2v.shape[1]), dtype=np.float64)
    Q = np.empty((Xv.shape[0], W3v.shape[1]), dtype=np.float64)
    cdef double[:, ::1] H1v = H1, H2v = H2, Qv = Q
    with nogil:
        _dense_forward(Xv, W1v, b1v, H1v, True)
        _dense_forward(H1v, W2v, b2v, H2v, True)
        _dense_forward(H2v, W3v, b3v, Qv, False)
    return H1, H2, Q


cdef void _dense_backward(
    const double[:, ::1] inp,
    const double[:, ::1] dout,
    const double[:, ::1] W,
    double[:, ::1] gW,
    double[::1] gb,
    double[:, ::1] dinp,
    const double[:, ::1] act,
) noexcept nogil:
    # Accumulates gW = inp^T @ dout, gb = sum(dout), and, when dinp is
    # non-empty, dinp = (dout @ W^T) masked by act > 0 (the ReLU gate).
    cdef Py_ssize_t B = inp.shape[0]
    cdef Py_ssize_t K = inp.shape[1]
    cdef Py_ssize_t J = dout.shape[1]
    cdef Py_ssize_t i, k, j
    cdef double v, s
    for i in range(B):
        for j in range(J):
            gb[j] += dout[i, j]
        for k in range(K):
            v = inp[i, k]
            if v != 0.0:
                for j in range(J):
                    gW[k, j] += v * dout[i, j]
        if dinp.shape[0] > 0:
            for k in range(K):
                if act[i, k] > 0.0:
                    s = 0.0
                    for j in range(J):
                        s += dout[i, j] * W[k, j]
                    dinp[i, k] = s
                else:
                    dinp[i, k] = 0.0


def train_grads(X, actions, targets, W1, b1, W2, b2, W3, b3, double delta):
    """Mean Huber loss on Q(s, a) vs targets, plus parameter gradients."""
    H1, H2, Q = forward(X, W1, b1, W2, b2, W3, b3)
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] H1v = H1, H2v = H2, Qv = Q
    cdef double[:, ::1] W2v = W2, W3v = W3
    cdef long long[::1] av = np.ascontiguousarray(actions, dtype=np.int64)
    cdef double[::1] tv = np.ascontiguousarray(targets, dtype=np.float64)

    cdef Py_ssize_t B = Xv.shape[0]
    cdef Py_ssize_t N = Qv.shape[1]
    dQ = np.zeros((B, N), dtype=np.float64)
    cdef double[:, ::1] dQv = dQ
    cdef Py_ssize_t i
    cdef double x, ax, loss = 0.0
    for i in range(B):
        x = Qv[i, av[i]] - tv[i]
        ax = x if x >= 0.0 else -x
        if ax <= delta:
            loss += 0.5 * x * x
        else:
            loss += delta * (ax - 0.5 * delta)
        if x > delta:
            x = delta
        elif x < -delta:
            x = -delta
        dQv[i, av[i]] = x / B
    loss /= B

    gW1 = np.zeros_like(np.asarray(W1))
    gb1 = np.zeros(H1.shape[1], dtype=np.float64)
    gW2 = np.zeros_like(np.asarray(W2))
    gb2 = np.zeros(H2.shape[1], dtype=np.float64)
    gW3 = np.zeros_like(np.asarray(W3))
    gb3 = np.zeros(N, dtype=np.float64)
    dH2 = np.empty((B, H2.shape[1]), dtype=np.float64)
    dH1 = np.empty((B, H1.shape[1]), dtype=np.float64)
    empty = np.empty((0, 0), dtype=np.float64)
    cdef double[:, ::1] gW1v = gW1, gW2v = gW2, gW3v = gW3
    cdef double[::1] gb1v = gb1, gb2v = gb2, gb3v = gb3
    cdef double[:, ::1] dH2v = dH2, dH1v = dH1, emptyv = empty

    with nogil:
        _dense_backward(H2v, dQv, W3v, gW3v, gb3v, dH2v, H2v)
        _dense_backward(H1v, dH2v, W2v, gW2v, gb2v, dH1v, H1v)
        _dense_backward(Xv, dH1v, W2v, gW1v, gb1v, emptyv, emptyv)
    return loss, gW1, gb1, gW2, gb2, gW3, gb3
