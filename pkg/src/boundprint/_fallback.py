"""Pure numpy versions of the per-point kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature and
the same arithmetic, up to floating-point summation order inside dot products.
"""

import math

import numpy as np


def _layers(net):
    return net.layers


def forward(net, x):
    a = np.asarray(x, dtype=np.float64)
    for W, b, relu in _layers(net):
        a = a @ W + b
        if relu:
            a = np.maximum(a, 0.0)
    return a


def _forward_trace(net, x):
    acts = [np.asarray(x, dtype=np.float64)]
    a = acts[0]
    for W, b, relu in _layers(net):
        a = a @ W + b
        if relu:
            a = np.maximum(a, 0.0)
        acts.append(a)
    return acts


def _backward(net, acts, dz):
    g = np.asarray(dz, dtype=np.float64)
    layers = _layers(net)
    for idx in range(len(layers) - 1, -1, -1):
        W, _, relu = layers[idx]
        if relu:
            g = g * (acts[idx + 1] > 0.0)
        g = W @ g
    return g


def grad_input(net, x, dz):
    return _backward(net, _forward_trace(net, x), dz)


def _argmax(z):
    return int(np.argmax(z))


def _ipguard_terms(z, i, j, k):
    t1 = (z[i] - z[j]) + k
    best = -1
    for t in range(len(z)):
        if t == i or t == j:
            continue
        if best < 0 or z[t] > z[best]:
            best = t
    t2 = z[best] - z[i] if best >= 0 else 0.0
    return t1, t2, best


def _adam_update(x, g, m, v, t, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    x -= lr * mhat / (np.sqrt(vhat) + eps)


def ipguard_descend(net, x0, i, j, k, lr, max_iters, beta1, beta2, eps):
    """Adam descent on the boundary objective with unit-box projection.

    Returns ``(x, x_prev, iters, converged)``; ``x_prev`` is the iterate before
    the last step (equal to ``x`` when no step was taken).
    """
    x = np.array(x0, dtype=np.float64)
    x_prev = x.copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    it = 0
    while True:
        acts = _forward_trace(net, x)
        z = acts[-1]
        t1, t2, best = _ipguard_terms(z, i, j, k)
        if t1 <= 0.0 and t2 <= 0.0:
            return x, x_prev, it, True
        if it >= max_iters:
            return x, x_prev, it, False
        dz = np.zeros_like(z)
        if t1 > 0.0:
            dz[i] += 1.0
            dz[j] -= 1.0
        if t2 > 0.0:
            dz[best] += 1.0
            dz[i] -= 1.0
        g = _backward(net, acts, dz)
        it += 1
        x_prev = x.copy()
        _adam_update(x, g, m, v, it, lr, beta1, beta2, eps)
        np.clip(x, 0.0, 1.0, out=x)


def _softmax(z):
    e = np.exp(z - np.max(z))
    return e / np.sum(e)


def ce_grad_logits(z, y):
    g = _softmax(z)
    g[y] -= 1.0
    return g


def igsm_attack(net, x0, j, epsilon, alpha, max_iters):
    """Iterated signed-gradient steps toward label ``j`` inside an L-inf ball.

    Returns ``(x, iters, success)``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    lo = np.maximum(x0 - epsilon, 0.0)
    hi = np.minimum(x0 + epsilon, 1.0)
    x = x0.copy()
    for it in range(1, max_iters + 1):
        acts = _forward_trace(net, x)
        g = _backward(net, acts, ce_grad_logits(acts[-1], j))
        x = np.minimum(np.maximum(x - alpha * np.sign(g), lo), hi)
        if _argmax(forward(net, x)) == j:
            return x, it, True
    return x, max_iters, False


def _cw_margin(z, j):
    best = -1
    for t in range(len(z)):
        if t != j and (best < 0 or z[t] > z[best]):
            best = t
    return z[j] - z[best], best


def cw_attack(net, x0, j, k, lr, inner_iters, search_steps, c_init, beta1, beta2, eps):
    """Targeted L2 attack in tanh space with a search over the trade-off constant.

    Returns ``(x, success, iters)``. On failure ``x`` is the iterate with the
    largest target margin seen.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    w0 = np.arctanh((2.0 * x0 - 1.0) * 0.999999)
    lo, hi, c = 0.0, math.inf, c_init
    best_x, best_l2, success = None, math.inf, False
    fallback_x, fallback_margin = x0.copy(), -math.inf
    iters = 0
    for _ in range(search_steps):
        w = w0.copy()
        m = np.zeros_like(w)
        v = np.zeros_like(w)
        hit = False
        for it in range(inner_iters + 1):
            tw = np.tanh(w)
            x = (tw + 1.0) / 2.0
            acts = _forward_trace(net, x)
            margin, best = _cw_margin(acts[-1], j)
            diff = x - x0
            l2 = float(np.sum(diff * diff))
            if margin >= k:
                hit = True
                if l2 < best_l2:
                    best_l2, best_x = l2, x.copy()
            elif margin > fallback_margin:
                fallback_margin, fallback_x = margin, x.copy()
            if it == inner_iters:
                break
            iters += 1
            dz = np.zeros(len(acts[-1]))
            if margin < k:
                dz[best] += c
                dz[j] -= c
            gx = _backward(net, acts, dz) + 2.0 * diff
            gw = gx * (1.0 - tw * tw) / 2.0
            _adam_update(w, gw, m, v, it + 1, lr, beta1, beta2, eps)
        if hit:
            success = True
            hi = min(hi, c)
            c = (lo + hi) / 2.0
        else:
            lo = max(lo, c)
            c = (lo + hi) / 2.0 if hi < math.inf else c * 2.0
    if success:
        return best_x, True, iters
    return fallback_x, False, iters
