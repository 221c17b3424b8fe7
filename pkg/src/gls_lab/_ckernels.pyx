# Compiled MLP kernels. Same contract and parameter layout as _pykernels.py,
# evaluated one sample at a time so small networks avoid numpy call overhead.

import numpy as np
from libc.math cimport exp, log

BACKEND = "cython"


cdef class _Net:
    cdef Py_ssize_t L, width, total
    cdef Py_ssize_t[::1] d, off_a, off_w, off_b

    def __init__(self, dims, Py_ssize_t nparams):
        cdef Py_ssize_t l, o = 0, a = 0
        self.d = np.asarray(dims, dtype=np.intp).copy()
        self.L = self.d.shape[0] - 1
        if self.L < 1:
            raise ValueError("need at least an input and an output layer")
        self.off_a = np.zeros(self.L + 1, dtype=np.intp)
        self.off_w = np.zeros(self.L, dtype=np.intp)
        self.off_b = np.zeros(self.L, dtype=np.intp)
        self.width = 0
        for l in range(self.L + 1):
            self.off_a[l] = a
            a += self.d[l]
            if self.d[l] > self.width:
                self.width = self.d[l]
        self.total = a
        for l in range(self.L):
            self.off_w[l] = o
            o += self.d[l] * self.d[l + 1]
            self.off_b[l] = o
            o += self.d[l + 1]
        if o != nparams:
            raise ValueError(f"parameter vector has {nparams} entries, layer dims need {o}")


cdef double _forward_one(_Net net, const double[::1] params, const double[:, ::1] X, Py_ssize_t n,
                         double[::1] acts, double[::1] s, double[::1] p, double eps) noexcept nogil:
    # Fills acts (pre-activations for every non-input layer) and s / p; returns the renorm sum.
    cdef Py_ssize_t l, i, j, n_in, n_out, ai, ao, ow, ob
    cdef Py_ssize_t K = net.d[net.L]
    cdef double z, m, tot, v
    for i in range(net.d[0]):
        acts[i] = X[n, i]
    for l in range(net.L):
        n_in = net.d[l]
        n_out = net.d[l + 1]
        ai = net.off_a[l]
        ao = net.off_a[l + 1]
        ow = net.off_w[l]
        ob = net.off_b[l]
        for j in range(n_out):
            acts[ao + j] = params[ob + j]
        # Row-major weights: the inner loop walks one contiguous row per input.
        for i in range(n_in):
            v = acts[ai + i]
            # acts holds pre-activations; apply ReLU on read for hidden inputs.
            if l > 0 and v <= 0.0:
                continue
            for j in range(n_out):
                acts[ao + j] += v * params[ow + i * n_out + j]
    ao = net.off_a[net.L]
    m = acts[ao]
    for j in range(1, K):
        if acts[ao + j] > m:
            m = acts[ao + j]
    tot = 0.0
    for j in range(K):
        s[j] = exp(acts[ao + j] - m)
        tot += s[j]
    for j in range(K):
        s[j] = s[j] / tot
    tot = 0.0
    for j in range(K):
        p[j] = s[j] if s[j] >= eps else eps
        tot += p[j]
    for j in range(K):
        p[j] = p[j] / tot
    return tot


def predict_probs(params, dims, X, double eps):
    cdef const double[::1] P = np.ascontiguousarray(params, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef _Net net = _Net(dims, P.shape[0])
    if Xv.shape[1] != net.d[0]:
        raise ValueError(f"input has {Xv.shape[1]} features, network expects {net.d[0]}")
    cdef Py_ssize_t N = Xv.shape[0], K = net.d[net.L], n, j
    out = np.empty((N, K), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[::1] acts = np.empty(net.total, dtype=np.float64)
    cdef double[::1] s = np.empty(K, dtype=np.float64)
    cdef double[::1] p = np.empty(K, dtype=np.float64)
    with nogil:
        for n in range(N):
            _forward_one(net, P, Xv, n, acts, s, p, eps)
            for j in range(K):
                o[n, j] = p[j]
    return out


def batch_loss_grad(params, dims, X, W, M, double eps):
    """Mean over the batch of ``-sum_k W[n,k] log((p_n M)_k)`` and its exact gradient."""
    cdef const double[::1] P = np.ascontiguousarray(params, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] Wv = np.ascontiguousarray(W, dtype=np.float64)
    cdef _Net net = _Net(dims, P.shape[0])
    cdef Py_ssize_t K = net.d[net.L]
    cdef Py_ssize_t B = Xv.shape[0]
    if Xv.shape[1] != net.d[0]:
        raise ValueError(f"input has {Xv.shape[1]} features, network expects {net.d[0]}")
    if Wv.shape[0] != B or Wv.shape[1] != K:
        raise ValueError("target weights must be (batch, K)")
    cdef bint mixed = M is not None
    cdef const double[:, ::1] Mv = np.ascontiguousarray(M if mixed else np.eye(K), dtype=np.float64)

    grad = np.zeros(P.shape[0], dtype=np.float64)
    cdef double[::1] g = grad
    cdef double[::1] acts = np.empty(net.total, dtype=np.float64)
    cdef double[::1] s = np.empty(K, dtype=np.float64)
    cdef double[::1] p = np.empty(K, dtype=np.float64)
    cdef double[::1] q = np.empty(K, dtype=np.float64)
    cdef double[::1] gq = np.empty(K, dtype=np.float64)
    cdef double[::1] gbuf = np.empty(2 * net.width, dtype=np.float64)
    cdef double* gcur
    cdef double* gnext
    cdef double* tmp
    cdef Py_ssize_t n, i, j, k, l, n_in, n_out, ai, ow, ob
    cdef double S, dot, loss = 0.0, invB = 1.0 / B, v, acc, w
    cdef bint bad = False

    with nogil:
        for n in range(B):
            gcur = &gbuf[0]
            gnext = &gbuf[net.width]
            S = _forward_one(net, P, Xv, n, acts, s, p, eps)
            for k in range(K):
                if mixed:
                    acc = 0.0
                    for i in range(K):
                        acc += p[i] * Mv[i, k]
                    q[k] = acc
                else:
                    q[k] = p[k]
            for k in range(K):
                w = Wv[n, k]
                if w != 0.0:
                    if q[k] <= 0.0:
                        bad = True
                        break
                    loss -= w * log(q[k])
                    gq[k] = -w / q[k]
                else:
                    gq[k] = 0.0
            if bad:
                break
            # gcur <- dL/dp
            for i in range(K):
                if mixed:
                    acc = 0.0
                    for k in range(K):
                        acc += Mv[i, k] * gq[k]
                    gcur[i] = acc
                else:
                    gcur[i] = gq[i]
            # through renormalization, then the clamp (stop-gradient below eps)
            dot = 0.0
            for i in range(K):
                dot += gcur[i] * p[i]
            for i in range(K):
                gcur[i] = (gcur[i] - dot) / S if s[i] >= eps else 0.0
            # softmax
            dot = 0.0
            for i in range(K):
                dot += gcur[i] * s[i]
            for i in range(K):
                gcur[i] = s[i] * (gcur[i] - dot) * invB
            # layers, output to input
            for l in range(net.L - 1, -1, -1):
                n_in = net.d[l]
                n_out = net.d[l + 1]
                ai = net.off_a[l]
                ow = net.off_w[l]
                ob = net.off_b[l]
                for j in range(n_out):
                    g[ob + j] += gcur[j]
                for i in range(n_in):
                    v = acts[ai + i]
                    if l > 0 and v < 0.0:
                        v = 0.0
                    if v != 0.0:
                        for j in range(n_out):
                            g[ow + i * n_out + j] += v * gcur[j]
                if l > 0:
                    for i in range(n_in):
                        if acts[ai + i] > 0.0:
                            acc = 0.0
                            for j in range(n_out):
                                acc += P[ow + i * n_out + j] * gcur[j]
                            gnext[i] = acc
                        else:
                            gnext[i] = 0.0
                    tmp = gcur
                    gcur = gnext
                    gnext = tmp
    if bad:
        raise ValueError("non-positive mixed probability in forward-corrected loss")
    return loss * invB, grad
