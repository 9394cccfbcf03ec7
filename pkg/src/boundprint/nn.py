"""Small dense feedforward classifiers: forward pass, gradients, training."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from . import kernels
from .errors import InputError, NumericError

ACTIVATIONS = ("relu", "identity")

ARCHITECTURES = {
    "small-mlp": (32, 32),
    "tiny-mlp": (16,),
}


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Network:
    """A dense network; ``weights[l]`` has shape (in, out).

    Immutable: every training or pruning routine returns a new instance.
    """

    weights: tuple
    biases: tuple
    activations: tuple
    arch_id: str = "custom"
    lineage: tuple = field(default=())

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases) or len(self.weights) != len(
            self.activations
        ):
            raise InputError("weights, biases and activations must be non-empty and aligned")
        ws = tuple(_frozen(W) for W in self.weights)
        bs = tuple(_frozen(b) for b in self.biases)
        for idx, (W, b, act) in enumerate(zip(ws, bs, self.activations)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise InputError(f"layer {idx}: bias shape {b.shape} does not match weight {W.shape}")
            if idx and ws[idx - 1].shape[1] != W.shape[0]:
                raise InputError(f"layer {idx}: input dim {W.shape[0]} != previous output {ws[idx - 1].shape[1]}")
            if act not in ACTIVATIONS:
                raise InputError(f"layer {idx}: unknown activation {act!r}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise NumericError(f"layer {idx}: non-finite parameters")
        if ws[-1].shape[1] < 2:
            raise InputError("a classifier needs at least 2 classes")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "activations", tuple(self.activations))
        object.__setattr__(self, "lineage", tuple(self.lineage))

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [W.shape[1] for W in self.weights]

    @property
    def n_weights(self) -> int:
        return sum(W.size for W in self.weights)

    @cached_property
    def packed(self) -> kernels.PackedNet:
        return kernels.PackedNet(
            self.weights, self.biases, [a == "relu" for a in self.activations]
        )

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend([W, b])
        return out

    def with_params(self, weights, biases, **changes) -> "Network":
        return replace(self, weights=tuple(weights), biases=tuple(biases), **changes)


def glorot_uniform(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_network(sizes: Sequence[int], seed: int, arch_id: str = "custom") -> Network:
    """Glorot-uniform weights, zero biases, ReLU on hidden layers."""
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise InputError(f"bad layer sizes {list(sizes)}")
    rng = np.random.default_rng(seed)
    weights = [glorot_uniform(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    acts = ["relu"] * (len(sizes) - 2) + ["identity"]
    return Network(tuple(weights), tuple(biases), tuple(acts), arch_id, (("init", int(seed)),))


def make_network(arch: str, input_dim: int, num_classes: int, seed: int) -> Network:
    if arch not in ARCHITECTURES:
        raise InputError(f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}")
    return init_network([input_dim, *ARCHITECTURES[arch], num_classes], seed, arch)


def _check_x(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise InputError(f"expected input of length {net.input_dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("input contains non-finite values")
    return x


def forward_logits(net: Network, x) -> np.ndarray:
    return kernels.forward(net.packed, _check_x(net, x))


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - np.max(z))
    return e / np.sum(e)


def argmax_first(z) -> int:
    # np.argmax returns the first maximal index
    return int(np.argmax(z))


def predict_label(net: Network, x) -> int:
    return argmax_first(forward_logits(net, x))


def predict_labels(net: Network, X) -> np.ndarray:
    """Per-point predictions through the same kernel used during extraction."""
    return np.array([predict_label(net, x) for x in np.asarray(X, dtype=np.float64)], dtype=np.int64)


def input_gradient(net: Network, x, scalar_fn) -> np.ndarray:
    """Gradient of ``scalar_fn(Z(x))`` with respect to ``x``.

    ``scalar_fn`` is any object with ``grad(z)`` returning dS/dz (see
    :mod:`boundprint.objectives`).
    """
    x = _check_x(net, x)
    z = kernels.forward(net.packed, x)
    dz = np.asarray(scalar_fn.grad(z), dtype=np.float64)
    g = kernels.grad_input(net.packed, x, dz)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite input gradient")
    return g


# --- batched numpy path used by training and accuracy --------------------


def forward_batch(net: Network, X) -> np.ndarray:
    a = np.asarray(X, dtype=np.float64)
    for W, b, act in zip(net.weights, net.biases, net.activations):
        a = a @ W + b
        if act == "relu":
            a = np.maximum(a, 0.0)
    return a


def accuracy(net: Network, data) -> float:
    pred = np.argmax(forward_batch(net, data.points), axis=1)
    return float(np.mean(pred == data.labels))


def _loss_and_grads(weights, biases, acts, X, y, l2):
    trace = [X]
    a = X
    for W, b, act in zip(weights, biases, acts):
        a = a @ W + b
        if act == "relu":
            a = np.maximum(a, 0.0)
        trace.append(a)
    z = trace[-1]
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    n = X.shape[0]
    loss = -np.mean(np.log(p[np.arange(n), y] + 1e-300))
    g = p
    g[np.arange(n), y] -= 1.0
    g /= n
    gW, gb = [None] * len(weights), [None] * len(weights)
    for idx in range(len(weights) - 1, -1, -1):
        if acts[idx] == "relu":
            g = g * (trace[idx + 1] > 0.0)
        gW[idx] = trace[idx].T @ g + l2 * weights[idx]
        gb[idx] = g.sum(axis=0)
        if idx:
            g = g @ weights[idx].T
    if l2:
        loss += 0.5 * l2 * sum(float(np.sum(W * W)) for W in weights)
    return loss, gW, gb


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InputError("params, grads and optimizer state differ in length")
    for p, g, m in zip(params, grads, state.m):
        if np.shape(p) != np.shape(g) or np.shape(p) != np.shape(m):
            raise InputError(f"shape mismatch: param {np.shape(p)}, grad {np.shape(g)}")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = m * b1 + (1.0 - b1) * g
        v = v * b2 + (1.0 - b2) * (g * g)
        new_p.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t, b1, b2, state.eps)


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 0.01
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    l2_penalty: float = 0.0

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise InputError(f"unknown optimizer {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise InputError("epochs must be >= 0 and batch_size >= 1")
        if self.l2_penalty < 0:
            raise InputError("l2_penalty must be non-negative")


def train(net: Network, data, cfg: TrainConfig, trainable=None, masks=None, tag="train") -> Network:
    """Minibatch cross-entropy training; returns a new network.

    ``trainable`` restricts updates to the given layer indices (others stay
    bit-identical). ``masks`` maps layer index to a 0/1 array multiplied into
    that weight matrix after every update.
    """
    if data.d != net.input_dim:
        raise InputError(f"data dimension {data.d} != network input {net.input_dim}")
    if np.any(data.labels >= net.num_classes) or np.any(data.labels < 0):
        raise InputError("labels outside the network's class range")
    if cfg.batch_size > len(data.labels):
        raise InputError(f"batch_size {cfg.batch_size} exceeds dataset size {len(data.labels)}")
    n_layers = len(net.weights)
    layers = list(range(n_layers)) if trainable is None else sorted(set(trainable))
    masks = dict(masks or {})
    weights = [np.array(W) for W in net.weights]
    biases = [np.array(b) for b in net.biases]
    lineage = net.lineage + ((tag, int(cfg.seed)),)
    if cfg.epochs == 0:
        return net.with_params(weights, biases, lineage=lineage)

    rng = np.random.default_rng(cfg.seed)
    X, y = data.points, data.labels
    N = len(y)
    state = None
    for _ in range(cfg.epochs):
        order = rng.permutation(N)
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, gW, gb = _loss_and_grads(weights, biases, net.activations, X[idx], y[idx], cfg.l2_penalty)
            params, grads = [], []
            for l in layers:
                gw = np.where(masks[l], gW[l], 0.0) if l in masks else gW[l]
                params.extend([weights[l], biases[l]])
                grads.extend([gw, gb[l]])
            if cfg.optimizer == "adam":
                if state is None:
                    state = AdamState.zeros_like(params)
                params, state = adam_step(params, grads, state, cfg.learning_rate)
            else:
                params = [p - cfg.learning_rate * g for p, g in zip(params, grads)]
            for pos, l in enumerate(layers):
                weights[l], biases[l] = params[2 * pos], params[2 * pos + 1]
                if l in masks:
                    weights[l] = np.where(masks[l], weights[l], 0.0)
    for W in weights:
        if not np.all(np.isfinite(W)):
            raise NumericError("training diverged (non-finite weights)")
    return net.with_params(weights, biases, lineage=lineage)
