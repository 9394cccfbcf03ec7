"""Backend selection for the per-point kernels.

The compiled module is used when it imports; otherwise the numpy fallback.
Setting ``BOUNDPRINT_PURE_PYTHON=1`` forces the fallback.
"""

import os

import numpy as np

from . import _fallback

if os.environ.get("BOUNDPRINT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"


class PackedNet:
    """Flat parameter arrays for the kernels, plus per-layer views for numpy."""

    def __init__(self, weights, biases, relu_flags):
        sizes = [weights[0].shape[0]] + [W.shape[1] for W in weights]
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.acts = np.asarray([1 if r else 0 for r in relu_flags], dtype=np.int32)
        self.W = np.ascontiguousarray(np.concatenate([W.ravel() for W in weights]))
        self.B = np.ascontiguousarray(np.concatenate([b.ravel() for b in biases]))
        self.woff = np.cumsum([0] + [W.size for W in weights[:-1]]).astype(np.int64)
        self.boff = np.cumsum([0] + [b.size for b in biases[:-1]]).astype(np.int64)
        self.maxw = int(max(sizes))
        self.layers = [(W, b, bool(r)) for W, b, r in zip(weights, biases, relu_flags)]
        self._bound = None


def backend_module(name=None):
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def forward(packed, x):
    return _impl.forward(packed, x)


def grad_input(packed, x, dz):
    return _impl.grad_input(packed, x, dz)


def ipguard_descend(packed, x0, i, j, k, lr, max_iters, beta1=0.9, beta2=0.999, eps=1e-8):
    return _impl.ipguard_descend(packed, x0, i, j, k, lr, max_iters, beta1, beta2, eps)


def igsm_attack(packed, x0, j, epsilon, alpha, max_iters):
    return _impl.igsm_attack(packed, x0, j, epsilon, alpha, max_iters)


def cw_attack(packed, x0, j, k, lr, inner_iters, search_steps, c_init,
              beta1=0.9, beta2=0.999, eps=1e-8):
    return _impl.cw_attack(packed, x0, j, k, lr, inner_iters, search_steps, c_init,
                           beta1, beta2, eps)
