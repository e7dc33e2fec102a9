# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the mean-aggregating network.

Same contract as ``_pykernels``. Internally every activation is stored
feature-major (features x time) so inner loops run along the long time axis.

Summation order is fixed and part of the contract:
  * matrix products accumulate over the shared index in ascending order;
  * reductions over time (loss, weight gradients) use four interleaved
    partial sums, lane = index mod 4, combined as (s0 + s1) + (s2 + s3).
Built with -ffp-contract=off, so no fused multiply-adds change rounding.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite, sqrt, tanh

cnp.import_array()

cdef enum:
    IDENTITY = 0
    RELU = 1
    TANH = 2


cdef void _chain_mean_fm(const double* h, double* out, const double* deg,
                         Py_ssize_t d, Py_ssize_t T) noexcept nogil:
    # out[j, t] = ((h[j, t] + h[j, t-1]) + h[j, t+1]) / deg[t]
    cdef Py_ssize_t j, t
    cdef const double* r
    cdef double* o
    for j in range(d):
        r = h + j * T
        o = out + j * T
        if T == 1:
            o[0] = r[0] / deg[0]
            continue
        o[0] = (r[0] + r[1]) / deg[0]
        for t in range(1, T - 1):
            o[t] = ((r[t] + r[t - 1]) + r[t + 1]) / deg[t]
        o[T - 1] = (r[T - 1] + r[T - 2]) / deg[T - 1]


cdef void _chain_adjoint_fm(const double* g, double* out, double* tmp, const double* deg,
                            Py_ssize_t d, Py_ssize_t T) noexcept nogil:
    # transpose of the chain mean: chain sum of g / deg
    cdef Py_ssize_t j, t
    cdef const double* r
    cdef double* o
    for j in range(d):
        r = g + j * T
        for t in range(T):
            tmp[t] = r[t] / deg[t]
        o = out + j * T
        if T == 1:
            o[0] = tmp[0]
            continue
        o[0] = tmp[0] + tmp[1]
        for t in range(1, T - 1):
            o[t] = (tmp[t] + tmp[t - 1]) + tmp[t + 1]
        o[T - 1] = tmp[T - 1] + tmp[T - 2]


cdef void _linear_fm(const double* W, const double* m, double* z,
                     Py_ssize_t din, Py_ssize_t dout, Py_ssize_t T) noexcept nogil:
    # z[o, :] = sum_i W[o, i] * m[i, :], i ascending
    cdef Py_ssize_t o, i, t
    cdef double w
    cdef double* zr
    cdef const double* mr
    for o in range(dout):
        zr = z + o * T
        for t in range(T):
            zr[t] = 0.0
        for i in range(din):
            w = W[o * din + i]
            mr = m + i * T
            for t in range(T):
                zr[t] = zr[t] + w * mr[t]


cdef void _linear_t_fm(const double* W, const double* dz, double* dm,
                       Py_ssize_t din, Py_ssize_t dout, Py_ssize_t T) noexcept nogil:
    # dm[i, :] = sum_o W[o, i] * dz[o, :], o ascending
    cdef Py_ssize_t o, i, t
    cdef double w
    cdef double* dr
    cdef const double* gr
    for i in range(din):
        dr = dm + i * T
        for t in range(T):
            dr[t] = 0.0
        for o in range(dout):
            w = W[o * din + i]
            gr = dz + o * T
            for t in range(T):
                dr[t] = dr[t] + w * gr[t]


cdef inline double _dot4(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t t = 0
    while t + 4 <= n:
        s0 = s0 + a[t] * b[t]
        s1 = s1 + a[t + 1] * b[t + 1]
        s2 = s2 + a[t + 2] * b[t + 2]
        s3 = s3 + a[t + 3] * b[t + 3]
        t += 4
    if t < n:
        s0 = s0 + a[t] * b[t]
    if t + 1 < n:
        s1 = s1 + a[t + 1] * b[t + 1]
    if t + 2 < n:
        s2 = s2 + a[t + 2] * b[t + 2]
    return (s0 + s1) + (s2 + s3)


cdef void _weight_grad_fm(const double* dz, const double* m, double* dW,
                          Py_ssize_t din, Py_ssize_t dout, Py_ssize_t T) noexcept nogil:
    # dW[o, i] = sum_t dz[o, t] * m[i, t]
    cdef Py_ssize_t o, i
    for o in range(dout):
        for i in range(din):
            dW[o * din + i] = _dot4(dz + o * T, m + i * T, T)


cdef void _activate(const double* z, double* h, Py_ssize_t n, int code) noexcept nogil:
    cdef Py_ssize_t j
    cdef double v
    if code == RELU:
        for j in range(n):
            v = z[j]
            h[j] = v if v > 0.0 else 0.0
    elif code == TANH:
        for j in range(n):
            h[j] = tanh(z[j])
    else:
        for j in range(n):
            h[j] = z[j]


cdef void _act_backprop(const double* z, const double* h, double* dh,
                        Py_ssize_t n, int code) noexcept nogil:
    # in place: dh <- dh * act'(z)
    cdef Py_ssize_t j
    if code == RELU:
        for j in range(n):
            dh[j] = dh[j] * (1.0 if z[j] > 0.0 else 0.0)
    elif code == TANH:
        for j in range(n):
            dh[j] = dh[j] * (1.0 - h[j] * h[j])


cdef inline double* _ptr(object a):
    cdef double[:, ::1] v = a
    return &v[0, 0]


cdef inline double* _ptr1(object a):
    cdef double[::1] v = a
    return &v[0]


def _degrees(Py_ssize_t T):
    deg = np.full(T, 3.0)
    deg[0] -= 1.0
    deg[T - 1] -= 1.0
    if T == 1:
        deg[0] = 1.0
    return deg


cdef class _Net:
    """Preallocated feature-major buffers for one (graph, architecture) pair."""

    cdef object xt, deg, tmp
    cdef list dims, ms, zs, hs, dhs, grads
    cdef int[::1] acts
    cdef Py_ssize_t n_layers, T

    def __init__(self, x, dims, acts):
        cdef Py_ssize_t T = x.shape[0], k
        if T < 1:
            raise ValueError("need at least one vertex")
        self.T = T
        self.xt = np.ascontiguousarray(np.asarray(x, dtype=np.float64).T)
        self.deg = _degrees(T)
        self.tmp = np.empty(T)
        self.acts = np.ascontiguousarray(acts, dtype=np.intc)
        self.dims = [int(v) for v in dims]
        self.n_layers = len(dims) - 1
        self.ms, self.zs, self.hs, self.dhs, self.grads = [], [], [], [], []
        for k in range(self.n_layers):
            self.ms.append(np.empty((dims[k], T)))
            self.zs.append(np.empty((dims[k + 1], T)))
            self.hs.append(np.empty((dims[k + 1], T)))
            self.dhs.append(np.empty((dims[k + 1], T)))
            self.grads.append(np.empty((dims[k + 1], dims[k])))

    cdef void _forward(self, list weights):
        cdef Py_ssize_t k, T = self.T, din, dout
        cdef const double* h_prev = _ptr(self.xt)
        cdef double* h
        cdef double* m
        cdef double* z
        for k in range(self.n_layers):
            din = self.dims[k]
            dout = self.dims[k + 1]
            m = _ptr(self.ms[k])
            z = _ptr(self.zs[k])
            h = _ptr(self.hs[k])
            _chain_mean_fm(h_prev, m, _ptr1(self.deg), din, T)
            _linear_fm(_ptr(weights[k]), m, z, din, dout, T)
            _activate(z, h, dout * T, self.acts[k])
            h_prev = h

    cdef double _loss_and_grads(self, list weights):
        cdef Py_ssize_t T = self.T, n = self.dims[0] * self.T, j, k, din, dout
        cdef double scale = 2.0 / T, loss
        cdef const double* out
        cdef const double* x = _ptr(self.xt)
        cdef double* dh
        self._forward(weights)
        out = _ptr(self.hs[self.n_layers - 1])
        dh = _ptr(self.dhs[self.n_layers - 1])
        for j in range(n):
            dh[j] = out[j] - x[j]
        loss = _dot4(dh, dh, n) / T
        for j in range(n):
            dh[j] = scale * dh[j]
        for k in range(self.n_layers - 1, -1, -1):
            din = self.dims[k]
            dout = self.dims[k + 1]
            dh = _ptr(self.dhs[k])
            _act_backprop(_ptr(self.zs[k]), _ptr(self.hs[k]), dh, dout * T, self.acts[k])
            _weight_grad_fm(dh, _ptr(self.ms[k]), _ptr(self.grads[k]), din, dout, T)
            if k > 0:
                # the layer-k aggregation buffer is dead now; reuse it for dL/dm
                _linear_t_fm(_ptr(weights[k]), dh, _ptr(self.ms[k]), din, dout, T)
                _chain_adjoint_fm(_ptr(self.ms[k]), _ptr(self.dhs[k - 1]), _ptr1(self.tmp),
                                  _ptr1(self.deg), din, T)
        return loss


def _dims(x, weights):
    dims = [x.shape[1]]
    for W in weights:
        dims.append(W.shape[0])
    return dims


def _prep(weights):
    return [np.ascontiguousarray(W, dtype=np.float64) for W in weights]


def chain_mean(h):
    h = np.asarray(h, dtype=np.float64)
    ht = np.ascontiguousarray(h.T)
    out = np.empty_like(ht)
    deg = _degrees(h.shape[0])
    _chain_mean_fm(_ptr(ht), _ptr(out), _ptr1(deg), ht.shape[0], h.shape[0])
    return np.ascontiguousarray(out.T)


def forward(x, weights, acts):
    weights = _prep(weights)
    cdef _Net net = _Net(x, _dims(x, weights), acts)
    net._forward(weights)
    return np.ascontiguousarray(net.hs[net.n_layers - 1].T)


def loss_and_grads(x, weights, acts):
    weights = _prep(weights)
    cdef _Net net = _Net(x, _dims(x, weights), acts)
    loss = net._loss_and_grads(weights)
    return loss, [np.array(g) for g in net.grads]


def train_adam(x, weights, acts, Py_ssize_t epochs, double lr, double beta1,
               double beta2, double eps, checkpoints=()):
    """Full-batch Adam; see ``_pykernels.train_adam`` for the return contract."""
    weights = [np.array(W, dtype=np.float64, order="C") for W in weights]
    cdef _Net net = _Net(x, _dims(x, weights), acts)
    cdef list m1 = [np.zeros_like(W) for W in weights]
    cdef list m2 = [np.zeros_like(W) for W in weights]
    cdef Py_ssize_t e, k, j, n
    cdef double loss, b1t = 1.0, b2t = 1.0, g, mhat, vhat
    cdef double* Wp
    cdef double* Gp
    cdef double* Ap
    cdef double* Bp
    trace = np.empty(epochs)
    cdef double[::1] tr = trace
    want = set(int(c) for c in checkpoints)
    snapshots = {}
    if 0 in want:
        snapshots[0] = [W.copy() for W in weights]
    for e in range(epochs):
        loss = net._loss_and_grads(weights)
        tr[e] = loss
        if not isfinite(loss):
            return trace[: e + 1], weights, snapshots, e
        b1t = b1t * beta1
        b2t = b2t * beta2
        for k in range(net.n_layers):
            Wp = _ptr(weights[k])
            Gp = _ptr(net.grads[k])
            Ap = _ptr(m1[k])
            Bp = _ptr(m2[k])
            n = weights[k].size
            for j in range(n):
                g = Gp[j]
                Ap[j] = Ap[j] * beta1 + (1.0 - beta1) * g
                Bp[j] = Bp[j] * beta2 + (1.0 - beta2) * (g * g)
                mhat = Ap[j] / (1.0 - b1t)
                vhat = Bp[j] / (1.0 - b2t)
                Wp[j] = Wp[j] - lr * mhat / (sqrt(vhat) + eps)
        if e + 1 in want:
            snapshots[e + 1] = [W.copy() for W in weights]
    return trace, weights, snapshots, -1
