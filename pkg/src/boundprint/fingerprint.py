"""Fingerprint extraction: boundary search plus adversarial-example baselines.

Every extractor draws point ``p`` from its own generator keyed by
``(seed, p)``, so results do not depend on thread scheduling.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .errors import FormatError, InputError
from .modelio import digest
from .nn import Network, forward_logits, input_gradient, predict_label
from .objectives import CrossEntropy
from .parallel import ordered_map, stream

FORMAT_VERSION = 1
METHODS = ("ipguard", "random", "fgsm", "igsm", "cw")


@dataclass(frozen=True)
class CWConfig:
    binary_search_steps: int = 6
    c_init: float = 1.0
    inner_iters: int = 500


@dataclass(frozen=True)
class ExtractConfig:
    n: int = 100
    k: float = 0.5
    epsilon: float = 0.1
    alpha: float = 1.0 / 255.0
    lr: float = 0.001
    max_iters: int = 1000
    init_strategy: str = "T"
    label_strategy: str = "L"
    seed: int = 0
    cw: CWConfig = field(default_factory=CWConfig)
    polish: bool = False

    def validate(self, method):
        if self.n < 1:
            raise InputError("n must be at least 1")
        if self.k < 0:
            raise InputError("k must be non-negative")
        if not self.lr > 0:
            raise InputError("lr must be positive")
        if self.max_iters < 0:
            raise InputError("max_iters must be non-negative")
        if self.init_strategy not in ("T", "R"):
            raise InputError(f"init strategy must be T or R, got {self.init_strategy!r}")
        if self.label_strategy not in ("R", "L"):
            raise InputError(f"label strategy must be R or L, got {self.label_strategy!r}")
        if method == "fgsm" and self.epsilon < 0:
            raise InputError("epsilon must be non-negative")
        if method == "igsm" and not (0 < self.alpha <= self.epsilon):
            raise InputError("IGSM needs 0 < alpha <= epsilon")
        if method == "cw" and (self.cw.binary_search_steps < 1 or self.cw.inner_iters < 1
                               or not self.cw.c_init > 0):
            raise InputError("invalid CW settings")

    @property
    def suffix(self) -> str:
        return f"-{self.init_strategy}{self.label_strategy}"


@dataclass(eq=False)
class Fingerprint:
    points: np.ndarray
    labels: np.ndarray
    method: str
    params: dict
    seed: int
    target_digest: str
    converged: np.ndarray
    iters: np.ndarray
    pairs: np.ndarray | None = None  # (i, j) per point, -1 where not applicable
    seconds: float = 0.0

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def to_json(self) -> dict:
        out = {
            "version": FORMAT_VERSION,
            "method": self.method,
            "params": self.params,
            "seed": self.seed,
            "target_digest": self.target_digest,
            "n": self.n,
            "d": self.d,
            "points": [[float(v) for v in p] for p in self.points],
            "labels": [int(v) for v in self.labels],
            "converged": [bool(v) for v in self.converged],
            "iters": [int(v) for v in self.iters],
        }
        if self.pairs is not None:
            out["pairs"] = [[int(a), int(b)] for a, b in self.pairs]
        return out

    @classmethod
    def from_json(cls, obj) -> "Fingerprint":
        if not isinstance(obj, dict):
            raise FormatError("fingerprint must be a JSON object")
        required = ("version", "method", "params", "seed", "target_digest", "n", "d",
                    "points", "labels", "converged", "iters")
        missing = [k for k in required if k not in obj]
        if missing:
            raise FormatError(f"fingerprint missing fields: {', '.join(missing)}")
        if obj["version"] != FORMAT_VERSION:
            raise FormatError(f"unsupported fingerprint version {obj['version']!r}")
        n, d = obj["n"], obj["d"]
        for key in ("points", "labels", "converged", "iters"):
            if not isinstance(obj[key], list) or len(obj[key]) != n:
                raise FormatError(f"'{key}' must be a list of length n={n}")
        try:
            points = np.array(obj["points"], dtype=np.float64)
            labels = np.array(obj["labels"], dtype=np.int64)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"bad fingerprint arrays: {exc}") from None
        if points.shape != (n, d):
            raise FormatError(f"points shape {points.shape} != ({n}, {d})")
        if np.any(points < 0) or np.any(points > 1):
            raise FormatError("fingerprint points outside the unit box")
        pairs = obj.get("pairs")
        return cls(
            points, labels, str(obj["method"]), dict(obj["params"]), int(obj["seed"]),
            str(obj["target_digest"]), np.array(obj["converged"], dtype=bool),
            np.array(obj["iters"], dtype=np.int64),
            None if pairs is None else np.array(pairs, dtype=np.int64).reshape(-1, 2),
            float(obj.get("timing", {}).get("extract_seconds", 0.0)),
        )


def save_fingerprint(fp: Fingerprint, path) -> None:
    obj = fp.to_json()
    obj["timing"] = {"extract_seconds": fp.seconds}
    Path(path).write_text(json.dumps(obj))


def load_fingerprint(path) -> Fingerprint:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read fingerprint {path}: {exc}") from None
    return Fingerprint.from_json(obj)


# --- objective and point selection -----------------------------------------


def ipguard_objective(z, i: int, j: int, k: float) -> float:
    """Hinge on ``Z_i - Z_j + k`` plus hinge on ``max_{t != i,j} Z_t - Z_i``.

    Zero exactly when ``Z_j >= Z_i + k`` and ``Z_i`` beats every other logit.
    With two classes the second hinge has nothing to compare and is 0.
    """
    z = np.asarray(z, dtype=np.float64)
    c = len(z)
    if i == j or not (0 <= i < c and 0 <= j < c):
        raise InputError(f"need distinct labels in [0, {c}), got i={i}, j={j}")
    if k < 0:
        raise InputError("k must be non-negative")
    first = max(0.0, float((z[i] - z[j]) + k))
    others = [z[t] for t in range(c) if t != i and t != j]
    second = max(0.0, float(max(others) - z[i])) if others else 0.0
    return first + second


def is_near_boundary(net: Network, x, tol: float) -> bool:
    z = np.sort(forward_logits(net, x))
    return bool(z[-1] - z[-2] <= tol)


def select_initial_point(target: Network, data, strategy: str, rng):
    if strategy == "T":
        if data is None or len(data) == 0:
            raise InputError("training-example initialization needs a non-empty dataset")
        x0 = np.array(data.points[int(rng.integers(len(data)))])
    elif strategy == "R":
        x0 = rng.random(target.input_dim)
    else:
        raise InputError(f"unknown init strategy {strategy!r}")
    return x0, predict_label(target, x0)


def select_target_label(target: Network, x0, i: int, strategy: str, rng) -> int:
    c = target.num_classes
    if c == 2:
        return 1 - i
    if strategy == "R":
        r = int(rng.integers(c - 1))
        return r if r < i else r + 1
    if strategy == "L":
        order = np.argsort(forward_logits(target, x0), kind="stable")
        return int(order[0]) if order[0] != i else int(order[1])
    raise InputError(f"unknown label strategy {strategy!r}")


def polish_to_boundary(net: Network, outside, inside, i, j, k, steps=200):
    """Bisect the segment from a nonzero-objective point to a zero-objective one.

    Returns the zero-objective end once the interval can no longer shrink.
    """
    lo = np.asarray(outside, dtype=np.float64)
    hi = np.asarray(inside, dtype=np.float64)
    for _ in range(steps):
        mid = (lo + hi) / 2.0
        if np.array_equal(mid, lo) or np.array_equal(mid, hi):
            break
        if ipguard_objective(forward_logits(net, mid), i, j, k) == 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def fgsm_step(x0, grad, epsilon):
    """``clip(x0 - epsilon * sign(grad))`` into the unit box."""
    return np.clip(np.asarray(x0, dtype=np.float64) - epsilon * np.sign(grad), 0.0, 1.0)


def clip_epsilon(x, x0, epsilon):
    """Cap the cumulative per-coordinate deviation from ``x0`` at ``epsilon``."""
    return np.clip(x, np.asarray(x0) - epsilon, np.asarray(x0) + epsilon)


# --- extractors -------------------------------------------------------------


def _start(target, data, cfg, p):
    rng = stream(cfg.seed, p)
    x0, i = select_initial_point(target, data, cfg.init_strategy, rng)
    j = select_target_label(target, x0, i, cfg.label_strategy, rng)
    return x0, i, j


def _ipguard_point(target, data, cfg, p):
    x0, i, j = _start(target, data, cfg, p)
    x, x_prev, iters, ok = kernels.ipguard_descend(target.packed, x0, i, j, cfg.k, cfg.lr, cfg.max_iters)
    if ok and cfg.polish:
        x = _polish(target, x, x_prev, iters, i, j, cfg)
    return x, ok, iters, (i, j)


def _polish(target, x, x_prev, iters, i, j, cfg):
    # The last step often crosses the i-vs-rest hinge rather than the i/j one.
    # Descending the mirrored objective (j over i by at most k, j still on top)
    # from x lands just past the i/j face, giving a segment to bisect across it.
    y, _, _, ok = kernels.ipguard_descend(target.packed, x, j, i, -cfg.k, cfg.lr, cfg.max_iters)
    if ok and ipguard_objective(forward_logits(target, y), i, j, cfg.k) > 0.0:
        return polish_to_boundary(target, y, x, i, j, cfg.k)
    if iters > 0:
        return polish_to_boundary(target, x_prev, x, i, j, cfg.k)
    return x


def _random_point(target, data, cfg, p):
    return stream(cfg.seed, p).random(target.input_dim), True, 0, (-1, -1)


def _fgsm_point(target, data, cfg, p):
    x0, i, j = _start(target, data, cfg, p)
    g = input_gradient(target, x0, CrossEntropy(j))
    x = fgsm_step(x0, g, cfg.epsilon)
    return x, predict_label(target, x) == j, 1, (i, j)


def _igsm_point(target, data, cfg, p):
    x0, i, j = _start(target, data, cfg, p)
    x, iters, ok = kernels.igsm_attack(target.packed, x0, j, cfg.epsilon, cfg.alpha, cfg.max_iters)
    return x, ok, iters, (i, j)


def _cw_point(target, data, cfg, p):
    x0, i, j = _start(target, data, cfg, p)
    x, ok, iters = kernels.cw_attack(target.packed, x0, j, cfg.k, cfg.lr, cfg.cw.inner_iters,
                                     cfg.cw.binary_search_steps, cfg.cw.c_init)
    return np.clip(x, 0.0, 1.0), ok, iters, (i, j)


_POINT_FNS = {
    "ipguard": _ipguard_point,
    "random": _random_point,
    "fgsm": _fgsm_point,
    "igsm": _igsm_point,
    "cw": _cw_point,
}


def method_params(method: str, cfg: ExtractConfig) -> dict:
    base = {"n": cfg.n, "init_strategy": cfg.init_strategy, "label_strategy": cfg.label_strategy}
    if method == "ipguard":
        base.update(k=cfg.k, lr=cfg.lr, max_iters=cfg.max_iters, polish=cfg.polish)
    elif method == "fgsm":
        base.update(epsilon=cfg.epsilon)
    elif method == "igsm":
        base.update(epsilon=cfg.epsilon, alpha=cfg.alpha, max_iters=cfg.max_iters)
    elif method == "cw":
        base.update(k=cfg.k, lr=cfg.lr, binary_search_steps=cfg.cw.binary_search_steps,
                    c_init=cfg.cw.c_init, inner_iters=cfg.cw.inner_iters)
    else:
        base = {"n": cfg.n}
    return base


def extract(method: str, target: Network, data, cfg: ExtractConfig, threads=None) -> Fingerprint:
    """Run one extractor and label the resulting points with ``target``."""
    if method not in _POINT_FNS:
        raise InputError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    cfg.validate(method)
    fn = _POINT_FNS[method]
    t0 = time.perf_counter()
    results = ordered_map(lambda p: fn(target, data, cfg, p), range(cfg.n), threads)
    seconds = time.perf_counter() - t0
    points = np.array([r[0] for r in results], dtype=np.float64)
    labels = np.array([predict_label(target, x) for x in points], dtype=np.int64)
    return Fingerprint(
        points=points,
        labels=labels,
        method=method,
        params=method_params(method, cfg),
        seed=int(cfg.seed),
        target_digest=digest(target),
        converged=np.array([bool(r[1]) for r in results]),
        iters=np.array([int(r[2]) for r in results], dtype=np.int64),
        pairs=np.array([r[3] for r in results], dtype=np.int64),
        seconds=seconds,
    )


def extract_ipguard(target, data, cfg, threads=None):
    return extract("ipguard", target, data, cfg, threads)


def extract_random(target, cfg, threads=None):
    return extract("random", target, None, replace(cfg, init_strategy="R"), threads)


def extract_fgsm(target, data, cfg, threads=None):
    return extract("fgsm", target, data, cfg, threads)


def extract_igsm(target, data, cfg, threads=None):
    return extract("igsm", target, data, cfg, threads)


def extract_cw(target, data, cfg, threads=None):
    return extract("cw", target, data, cfg, threads)
