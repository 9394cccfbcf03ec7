# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-point kernels. Mirrors ``_fallback`` function for function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, tanh, atanh, pow, exp, INFINITY

cnp.import_array()


cdef struct Net:
    int n_layers
    const cnp.int64_t *sizes
    const int *acts
    const double *W
    const double *B
    const cnp.int64_t *woff
    const cnp.int64_t *boff


cdef class _Bound:
    """Keeps the packed arrays alive while a ``Net`` view points into them."""
    cdef Net net
    cdef object refs
    cdef int maxw

    def __init__(self, packed):
        cdef const cnp.int64_t[::1] sizes = packed.sizes
        cdef const int[::1] acts = packed.acts
        cdef const double[::1] W = packed.W
        cdef const double[::1] B = packed.B
        cdef const cnp.int64_t[::1] woff = packed.woff
        cdef const cnp.int64_t[::1] boff = packed.boff
        self.refs = (sizes, acts, W, B, woff, boff)
        self.net.n_layers = acts.shape[0]
        self.net.sizes = &sizes[0]
        self.net.acts = &acts[0]
        self.net.W = &W[0]
        self.net.B = &B[0]
        self.net.woff = &woff[0]
        self.net.boff = &boff[0]
        self.maxw = packed.maxw


cdef _Bound _bind(packed):
    cached = getattr(packed, "_bound", None)
    if cached is None:
        cached = _Bound(packed)
        packed._bound = cached
    return <_Bound>cached


cdef void _forward(const Net *net, double *a, int maxw) noexcept nogil:
    # a is (n_layers+1, maxw) row-major; row 0 holds the input
    cdef int l, o, p, nin, nout
    cdef double s
    cdef const double *W
    cdef const double *B
    cdef double *src
    cdef double *dst
    for l in range(net.n_layers):
        nin = <int>net.sizes[l]
        nout = <int>net.sizes[l + 1]
        W = net.W + net.woff[l]
        B = net.B + net.boff[l]
        src = a + l * maxw
        dst = a + (l + 1) * maxw
        for o in range(nout):
            s = 0.0
            for p in range(nin):
                s = s + src[p] * W[p * nout + o]
            s = s + B[o]
            if net.acts[l] == 1 and s < 0.0:
                s = 0.0
            dst[o] = s


cdef void _backward(const Net *net, const double *a, int maxw,
                    double *g, double *tmp) noexcept nogil:
    # g holds dL/dz on entry (length c) and dL/dx on exit; tmp is scratch
    cdef int l, o, p, nin, nout
    cdef double s
    cdef const double *W
    cdef const double *post
    for l in range(net.n_layers - 1, -1, -1):
        nin = <int>net.sizes[l]
        nout = <int>net.sizes[l + 1]
        W = net.W + net.woff[l]
        post = a + (l + 1) * maxw
        if net.acts[l] == 1:
            for o in range(nout):
                if not (post[o] > 0.0):
                    g[o] = 0.0
        for p in range(nin):
            s = 0.0
            for o in range(nout):
                s = s + W[p * nout + o] * g[o]
            tmp[p] = s
        for p in range(nin):
            g[p] = tmp[p]


cdef int _argmax(const double *z, int c) noexcept nogil:
    cdef int t, best = 0
    for t in range(1, c):
        if z[t] > z[best]:
            best = t
    return best


cdef inline double _sign(double v) noexcept nogil:
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


def forward(packed, x):
    cdef _Bound bd = _bind(packed)
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef int L = bd.net.n_layers, maxw = bd.maxw
    cdef int d = <int>bd.net.sizes[0], c = <int>bd.net.sizes[L]
    cdef cnp.ndarray[double, ndim=2, mode="c"] work = np.zeros((L + 1, maxw))
    cdef double *a = &work[0, 0]
    cdef int p
    for p in range(d):
        a[p] = xv[p]
    with nogil:
        _forward(&bd.net, a, maxw)
    return work[L, :c].copy()


def grad_input(packed, x, dz):
    cdef _Bound bd = _bind(packed)
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] dzv = np.ascontiguousarray(dz, dtype=np.float64)
    cdef int L = bd.net.n_layers, maxw = bd.maxw
    cdef int d = <int>bd.net.sizes[0], c = <int>bd.net.sizes[L]
    cdef cnp.ndarray[double, ndim=2, mode="c"] work = np.zeros((L + 1, maxw))
    cdef cnp.ndarray[double, ndim=1] g = np.zeros(maxw)
    cdef cnp.ndarray[double, ndim=1] tmp = np.zeros(maxw)
    cdef double *a = &work[0, 0]
    cdef int p
    for p in range(d):
        a[p] = xv[p]
    for p in range(c):
        g[p] = dzv[p]
    with nogil:
        _forward(&bd.net, a, maxw)
        _backward(&bd.net, a, maxw, &g[0], &tmp[0])
    return g[:d].copy()


cdef inline void _adam(double *x, const double *g, double *m, double *v, int n,
                       int t, double lr, double b1, double b2, double eps) noexcept nogil:
    cdef int p
    cdef double bc1 = 1.0 - pow(b1, t), bc2 = 1.0 - pow(b2, t)
    cdef double mhat, vhat
    for p in range(n):
        m[p] = m[p] * b1 + (1.0 - b1) * g[p]
        v[p] = v[p] * b2 + (1.0 - b2) * (g[p] * g[p])
        mhat = m[p] / bc1
        vhat = v[p] / bc2
        x[p] = x[p] - lr * mhat / (sqrt(vhat) + eps)


def ipguard_descend(packed, x0, int i, int j, double k, double lr, int max_iters,
                    double beta1, double beta2, double eps):
    cdef _Bound bd = _bind(packed)
    cdef int L = bd.net.n_layers, maxw = bd.maxw
    cdef int d = <int>bd.net.sizes[0], c = <int>bd.net.sizes[L]
    cdef cnp.ndarray[double, ndim=1] x = np.array(x0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] x_prev = x.copy()
    cdef cnp.ndarray[double, ndim=2, mode="c"] work = np.zeros((L + 1, maxw))
    cdef cnp.ndarray[double, ndim=1] g = np.zeros(maxw)
    cdef cnp.ndarray[double, ndim=1] tmp = np.zeros(maxw)
    cdef cnp.ndarray[double, ndim=1] m = np.zeros(d)
    cdef cnp.ndarray[double, ndim=1] v = np.zeros(d)
    cdef double *a = &work[0, 0]
    cdef double *xp = &x[0]
    cdef double *xq = &x_prev[0]
    cdef double *z = a + L * maxw
    cdef int it = 0, p, t, best
    cdef bint converged = False
    cdef double t1, t2
    with nogil:
        while True:
            for p in range(d):
                a[p] = xp[p]
            _forward(&bd.net, a, maxw)
            t1 = (z[i] - z[j]) + k
            best = -1
            for t in range(c):
                if t == i or t == j:
                    continue
                if best < 0 or z[t] > z[best]:
                    best = t
            t2 = z[best] - z[i] if best >= 0 else 0.0
            if t1 <= 0.0 and t2 <= 0.0:
                converged = True
                break
            if it >= max_iters:
                break
            for p in range(c):
                g[p] = 0.0
            if t1 > 0.0:
                g[i] += 1.0
                g[j] -= 1.0
            if t2 > 0.0:
                g[best] += 1.0
                g[i] -= 1.0
            _backward(&bd.net, a, maxw, &g[0], &tmp[0])
            it += 1
            for p in range(d):
                xq[p] = xp[p]
            _adam(xp, &g[0], &m[0], &v[0], d, it, lr, beta1, beta2, eps)
            for p in range(d):
                if xp[p] < 0.0:
                    xp[p] = 0.0
                elif xp[p] > 1.0:
                    xp[p] = 1.0
    return x, x_prev, it, bool(converged)


def igsm_attack(packed, x0, int j, double epsilon, double alpha, int max_iters):
    cdef _Bound bd = _bind(packed)
    cdef int L = bd.net.n_layers, maxw = bd.maxw
    cdef int d = <int>bd.net.sizes[0], c = <int>bd.net.sizes[L]
    cdef cnp.ndarray[double, ndim=1] x0v = np.array(x0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] x = x0v.copy()
    cdef cnp.ndarray[double, ndim=1] lo = np.maximum(x0v - epsilon, 0.0)
    cdef cnp.ndarray[double, ndim=1] hi = np.minimum(x0v + epsilon, 1.0)
    cdef cnp.ndarray[double, ndim=2, mode="c"] work = np.zeros((L + 1, maxw))
    cdef cnp.ndarray[double, ndim=1] g = np.zeros(maxw)
    cdef cnp.ndarray[double, ndim=1] tmp = np.zeros(maxw)
    cdef double *a = &work[0, 0]
    cdef double *z = a + L * maxw
    cdef double *xp = &x[0]
    cdef int it, p, done = 0
    cdef double zmax, s, val
    with nogil:
        for it in range(1, max_iters + 1):
            for p in range(d):
                a[p] = xp[p]
            _forward(&bd.net, a, maxw)
            zmax = z[0]
            for p in range(1, c):
                if z[p] > zmax:
                    zmax = z[p]
            s = 0.0
            for p in range(c):
                g[p] = exp(z[p] - zmax)
                s = s + g[p]
            for p in range(c):
                g[p] = g[p] / s
            g[j] -= 1.0
            _backward(&bd.net, a, maxw, &g[0], &tmp[0])
            for p in range(d):
                val = xp[p] - alpha * _sign(g[p])
                if val < lo[p]:
                    val = lo[p]
                if val > hi[p]:
                    val = hi[p]
                xp[p] = val
                a[p] = val
            _forward(&bd.net, a, maxw)
            if _argmax(z, c) == j:
                done = it
                break
    if done:
        return x, done, True
    return x, max_iters, False


def cw_attack(packed, x0, int j, double k, double lr, int inner_iters, int search_steps,
              double c_init, double beta1, double beta2, double eps):
    cdef _Bound bd = _bind(packed)
    cdef int L = bd.net.n_layers, maxw = bd.maxw
    cdef int d = <int>bd.net.sizes[0], nc = <int>bd.net.sizes[L]
    cdef cnp.ndarray[double, ndim=1] x0v = np.array(x0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] w0 = np.arctanh((2.0 * x0v - 1.0) * 0.999999)
    cdef cnp.ndarray[double, ndim=1] w = np.zeros(d)
    cdef cnp.ndarray[double, ndim=1] tw = np.zeros(d)
    cdef cnp.ndarray[double, ndim=1] m = np.zeros(d)
    cdef cnp.ndarray[double, ndim=1] v = np.zeros(d)
    cdef cnp.ndarray[double, ndim=1] best_x = x0v.copy()
    cdef cnp.ndarray[double, ndim=1] fb_x = x0v.copy()
    cdef cnp.ndarray[double, ndim=2, mode="c"] work = np.zeros((L + 1, maxw))
    cdef cnp.ndarray[double, ndim=1] g = np.zeros(maxw)
    cdef cnp.ndarray[double, ndim=1] tmp = np.zeros(maxw)
    cdef double *a = &work[0, 0]
    cdef double *z = a + L * maxw
    cdef double lo = 0.0, hi = INFINITY, cc = c_init
    cdef double best_l2 = INFINITY, fb_margin = -INFINITY, margin, l2, diff
    cdef bint success = False, hit
    cdef int step, it, p, t, best
    cdef long long iters = 0
    with nogil:
        for step in range(search_steps):
            for p in range(d):
                w[p] = w0[p]
                m[p] = 0.0
                v[p] = 0.0
            hit = False
            for it in range(inner_iters + 1):
                for p in range(d):
                    tw[p] = tanh(w[p])
                    a[p] = (tw[p] + 1.0) / 2.0
                _forward(&bd.net, a, maxw)
                best = -1
                for t in range(nc):
                    if t != j and (best < 0 or z[t] > z[best]):
                        best = t
                margin = z[j] - z[best]
                l2 = 0.0
                for p in range(d):
                    diff = a[p] - x0v[p]
                    l2 = l2 + diff * diff
                if margin >= k:
                    hit = True
                    if l2 < best_l2:
                        best_l2 = l2
                        for p in range(d):
                            best_x[p] = a[p]
                elif margin > fb_margin:
                    fb_margin = margin
                    for p in range(d):
                        fb_x[p] = a[p]
                if it == inner_iters:
                    break
                iters += 1
                for p in range(nc):
                    g[p] = 0.0
                if margin < k:
                    g[best] += cc
                    g[j] -= cc
                _backward(&bd.net, a, maxw, &g[0], &tmp[0])
                for p in range(d):
                    g[p] = (g[p] + 2.0 * (a[p] - x0v[p])) * (1.0 - tw[p] * tw[p]) / 2.0
                _adam(&w[0], &g[0], &m[0], &v[0], d, it + 1, lr, beta1, beta2, eps)
            if hit:
                success = True
                if cc < hi:
                    hi = cc
                cc = (lo + hi) / 2.0
            else:
                if cc > lo:
                    lo = cc
                if hi < INFINITY:
                    cc = (lo + hi) / 2.0
                else:
                    cc = cc * 2.0
    if success:
        return best_x, True, iters
    return fb_x, False, iters
