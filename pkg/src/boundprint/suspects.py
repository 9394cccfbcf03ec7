"""Positive (post-processed) and negative suspect populations."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .forest import Forest, forest_accuracy, train_forest
from .modelio import digest, load_model, save_model
from .nn import Network, TrainConfig, accuracy, glorot_uniform, init_network, make_network, train
from .parallel import derive_seed, ordered_map

POSITIVE_KINDS = ("FTLL", "FTAL", "RTLL", "RTAL", "WP", "FP")
NEGATIVE_KINDS = ("same-arch", "diff-arch", "forest")


@dataclass
class SuspectEntry:
    model: object
    tag: str
    kind: str
    param: float | None = None
    seed: int | None = None
    test_accuracy: float = float("nan")
    path: str | None = None

    @property
    def label(self) -> str:
        return self.kind if self.param is None else f"{self.kind}({self.param:g})"


@dataclass
class SuspectSet:
    entries: list = field(default_factory=list)

    def __post_init__(self):
        for e in self.entries:
            expected = "positive" if e.kind in POSITIVE_KINDS else "negative"
            if e.kind not in POSITIVE_KINDS + NEGATIVE_KINDS:
                raise InputError(f"unknown suspect kind {e.kind!r}")
            if e.tag != expected:
                raise InputError(f"{e.kind} suspects must be tagged {expected}, got {e.tag}")

    @property
    def positives(self):
        return [e for e in self.entries if e.tag == "positive"]

    @property
    def negatives(self):
        return [e for e in self.entries if e.tag == "negative"]


def _last(net):
    return len(net.weights) - 1


def _reinit_last(net: Network, seed: int) -> Network:
    rng = np.random.default_rng(seed)
    W = net.weights[-1]
    weights = list(net.weights[:-1]) + [glorot_uniform(rng, *W.shape)]
    biases = list(net.biases[:-1]) + [np.zeros_like(net.biases[-1])]
    return net.with_params(weights, biases, lineage=net.lineage + (("reinit-last", int(seed)),))


def ftll(net: Network, data, cfg: TrainConfig) -> Network:
    """Fine-tune only the output layer."""
    return train(net, data, cfg, trainable=[_last(net)], tag="ftll")


def ftal(net: Network, data, cfg: TrainConfig) -> Network:
    return train(net, data, cfg, tag="ftal")


def rtll(net: Network, data, cfg: TrainConfig, seed: int) -> Network:
    """Re-initialize the output layer, then train it alone."""
    return train(_reinit_last(net, seed), data, cfg, trainable=[_last(net)], tag="rtll")


def rtal(net: Network, data, cfg: TrainConfig, seed: int) -> Network:
    """Re-initialize the output layer, then train every layer."""
    return train(_reinit_last(net, seed), data, cfg, tag="rtal")


def _floor_count(frac, total):
    # guards against products like 0.3 * 10 = 2.9999999999999996
    return int(math.floor(round(frac * total, 9)))


def magnitude_masks(net: Network, p: float) -> list:
    """Keep-masks dropping the ``floor(p * W)`` smallest-magnitude weights globally."""
    if not 0.0 < p < 1.0:
        raise InputError(f"prune fraction must be in (0, 1), got {p}")
    flat = np.concatenate([np.abs(W).ravel() for W in net.weights])
    count = _floor_count(p, flat.size)
    keep = np.ones(flat.size, dtype=bool)
    keep[np.argsort(flat, kind="stable")[:count]] = False
    masks, pos = [], 0
    for W in net.weights:
        masks.append(keep[pos:pos + W.size].reshape(W.shape))
        pos += W.size
    return masks


def weight_prune(net: Network, p: float, data, cfg: TrainConfig) -> Network:
    masks = magnitude_masks(net, p)
    weights = [np.where(m, W, 0.0) for W, m in zip(net.weights, masks)]
    pruned = net.with_params(weights, net.biases, lineage=net.lineage + (("wp", float(p)),))
    return train(pruned, data, cfg, masks=dict(enumerate(masks)), tag="wp-retrain")


def _units_to_remove(net: Network, c: float) -> list:
    if not 0.0 < c < 1.0:
        raise InputError(f"filter fraction must be in (0, 1), got {c}")
    removed = []
    for W in net.weights[:-1]:
        units = W.shape[1]
        count = min(_floor_count(c, units), units - 1)
        norms = np.abs(W).sum(axis=0)
        removed.append(np.sort(np.argsort(norms, kind="stable")[:count]))
    return removed


def prune_units(net: Network, c: float) -> Network:
    """Drop the lowest-L1 hidden units of every hidden layer (no retraining)."""
    removed = _units_to_remove(net, c)
    weights = [np.array(W) for W in net.weights]
    biases = [np.array(b) for b in net.biases]
    for l, drop in enumerate(removed):
        keep = np.setdiff1d(np.arange(weights[l].shape[1]), drop)
        weights[l] = weights[l][:, keep]
        biases[l] = biases[l][keep]
        weights[l + 1] = weights[l + 1][keep, :]
    return net.with_params(weights, biases, lineage=net.lineage + (("fp", float(c)),))


def mask_units(net: Network, c: float) -> Network:
    """Same pruning as :func:`prune_units` but zeroing units in place."""
    removed = _units_to_remove(net, c)
    weights = [np.array(W) for W in net.weights]
    biases = [np.array(b) for b in net.biases]
    for l, drop in enumerate(removed):
        weights[l][:, drop] = 0.0
        biases[l][drop] = 0.0
        weights[l + 1][drop, :] = 0.0
    return net.with_params(weights, biases)


def filter_prune(net: Network, c: float, data, cfg: TrainConfig) -> Network:
    return train(prune_units(net, c), data, cfg, tag="fp-retrain")


def default_fp_step(net: Network) -> float:
    widths = [W.shape[1] for W in net.weights[:-1]]
    if not widths:
        raise InputError("filter pruning needs at least one hidden layer")
    if all(w % 16 == 0 for w in widths):
        return 1.0 / 16.0
    return 1.0 / min(widths)


def pruning_ladder(net: Network, train_data, test_data, mode: str, cfg: TrainConfig,
                   step: float | None = None, max_acc_loss: float = 0.03):
    """Prune at ``step, 2*step, ...`` until test accuracy drops by more than ``max_acc_loss``.

    Returns ``[(fraction, network, test_accuracy), ...]`` for the admitted rungs.
    """
    if mode not in ("WP", "FP"):
        raise InputError(f"mode must be WP or FP, got {mode!r}")
    if step is None:
        step = 0.1 if mode == "WP" else default_fp_step(net)
    if not step > 0:
        raise InputError("step must be positive")
    base = accuracy(net, test_data)
    rungs = []
    idx = 1
    while idx * step < 1.0 - 1e-12:
        frac = idx * step
        if mode == "FP" and all(_floor_count(frac, W.shape[1]) >= W.shape[1] for W in net.weights[:-1]):
            break
        rung_cfg = replace(cfg, seed=derive_seed(cfg.seed, mode, idx))
        pruned = (weight_prune if mode == "WP" else filter_prune)(net, frac, train_data, rung_cfg)
        acc = accuracy(pruned, test_data)
        if base - acc > max_acc_loss + 1e-12:
            break
        rungs.append((frac, pruned, acc))
        idx += 1
    return rungs


@dataclass(frozen=True)
class SuiteConfig:
    n_same_arch: int = 10
    n_diff_arch: int = 5
    n_forests: int = 5
    n_trees: int = 20
    diff_arch: str = "tiny-mlp"
    finetune_fraction: float = 0.2
    finetune_lr: float | None = None
    include_ladders: bool = True
    wp_step: float = 0.1
    fp_step: float | None = None
    max_acc_loss: float = 0.03
    seed: int = 0


def _finetune_cfg(train_cfg: TrainConfig, suite: SuiteConfig, *key) -> TrainConfig:
    epochs = max(1, int(math.ceil(suite.finetune_fraction * train_cfg.epochs)))
    lr = suite.finetune_lr if suite.finetune_lr is not None else train_cfg.learning_rate
    return replace(train_cfg, epochs=epochs, learning_rate=lr, seed=derive_seed(suite.seed, *key))


def _same_arch(target: Network, seed: int) -> Network:
    if target.arch_id in ("small-mlp", "tiny-mlp"):
        return make_network(target.arch_id, target.input_dim, target.num_classes, seed)
    return init_network(target.layer_sizes, seed, target.arch_id)


def _model_accuracy(model, data):
    return forest_accuracy(model, data) if isinstance(model, Forest) else accuracy(model, data)


def build_suspect_suite(target: Network, train_data, test_data, suite: SuiteConfig,
                        train_cfg: TrainConfig, threads=None) -> SuspectSet:
    """Build every positive and negative suspect; deterministic given ``suite.seed``."""
    jobs = []

    def fine(kind):
        cfg = _finetune_cfg(train_cfg, suite, kind)
        reseed = derive_seed(suite.seed, kind, "reinit")
        fns = {
            "FTLL": lambda: ftll(target, train_data, cfg),
            "FTAL": lambda: ftal(target, train_data, cfg),
            "RTLL": lambda: rtll(target, train_data, cfg, reseed),
            "RTAL": lambda: rtal(target, train_data, cfg, reseed),
        }
        return [SuspectEntry(fns[kind](), "positive", kind, None, cfg.seed)]

    def ladder(mode):
        cfg = _finetune_cfg(train_cfg, suite, mode)
        step = suite.wp_step if mode == "WP" else suite.fp_step
        rungs = pruning_ladder(target, train_data, test_data, mode, cfg, step, suite.max_acc_loss)
        return [SuspectEntry(net, "positive", mode, float(frac), cfg.seed, acc) for frac, net, acc in rungs]

    def same(idx):
        seed = derive_seed(suite.seed, "same-arch", idx)
        net = train(_same_arch(target, seed), train_data, replace(train_cfg, seed=seed))
        return [SuspectEntry(net, "negative", "same-arch", None, seed)]

    def diff(idx):
        seed = derive_seed(suite.seed, "diff-arch", idx)
        net = make_network(suite.diff_arch, target.input_dim, target.num_classes, seed)
        net = train(net, train_data, replace(train_cfg, seed=seed))
        return [SuspectEntry(net, "negative", "diff-arch", None, seed)]

    def forest(idx):
        seed = derive_seed(suite.seed, "forest", idx)
        return [SuspectEntry(train_forest(train_data, suite.n_trees, seed), "negative", "forest", None, seed)]

    for kind in ("FTLL", "FTAL", "RTLL", "RTAL"):
        jobs.append((fine, kind))
    if suite.include_ladders:
        jobs += [(ladder, "WP"), (ladder, "FP")]
    jobs += [(same, i) for i in range(suite.n_same_arch)]
    jobs += [(diff, i) for i in range(suite.n_diff_arch)]
    jobs += [(forest, i) for i in range(suite.n_forests)]

    groups = ordered_map(lambda job: job[0](job[1]), jobs, threads)
    entries = [e for group in groups for e in group]
    for e in entries:
        if math.isnan(e.test_accuracy):
            e.test_accuracy = _model_accuracy(e.model, test_data)
    return SuspectSet(entries)


def save_suite(suite: SuspectSet, out_dir, target: Network | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    members = []
    for idx, e in enumerate(suite.entries):
        name = f"member_{idx:03d}_{e.kind.lower()}.bmk"
        save_model(e.model, out / name)
        e.path = name
        members.append({
            "kind": e.kind, "tag": e.tag, "param": e.param, "seed": e.seed,
            "accuracy": e.test_accuracy, "path": name, "digest": digest(e.model),
        })
    manifest = {"version": 1, "target_digest": digest(target) if target is not None else None,
                "members": members}
    path = out / "suite.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_suite(manifest_path) -> SuspectSet:
    """Load a saved suite from its manifest or the directory holding it."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "suite.json"
    try:
        manifest = json.loads(path.read_text())
        members = manifest["members"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"cannot read suite manifest {path}: {exc}") from None
    entries = []
    for m in members:
        model = load_model(path.parent / m["path"])
        entries.append(SuspectEntry(model, m["tag"], m["kind"], m.get("param"), m.get("seed"),
                                    float(m.get("accuracy", float("nan"))), m["path"]))
    return SuspectSet(entries)


def suite_summary(suite: SuspectSet) -> list:
    return [{"kind": e.kind, "tag": e.tag, "param": e.param, "accuracy": e.test_accuracy}
            for e in suite.entries]

