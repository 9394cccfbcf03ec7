"""End-to-end experiments: train a target, build suspects, sweep extractors, score."""

from __future__ import annotations

import copy
import csv
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import kernels
from .data import SyntheticSpec, generate, split
from .errors import BoundprintError, FormatError, InputError, StageError
from .fingerprint import CWConfig, ExtractConfig, extract
from .metrics import aruc, auc, best_threshold, curve, gap
from .modelio import digest
from .nn import TrainConfig, accuracy, make_network, train
from .parallel import derive_seed
from .suspects import SuiteConfig, build_suspect_suite
from .verify import query_labels

REPORT_VERSION = 1

DEFAULT_CONFIG = {
    "seed": 0,
    "dataset": {"kind": "blobs", "n_per_class": 125, "c": 4, "noise_sigma": 0.15, "d": 32},
    "split": 0.8,
    "target": {"arch": "small-mlp",
               "train": {"optimizer": "adam", "learning_rate": 0.01, "epochs": 30, "batch_size": 32}},
    "suite": {"finetune_lr": 0.001},
    "n": 100,
    "r": 100,
    "methods": [
        {"method": "ipguard", "strategy": "TL", "params": {"lr": 0.001},
         "grid": {"k": [0.0, 0.25, 0.5, 1.0, 2.0, 4.0]}},
        {"method": "random"},
    ],
}

BUNDLED_CONFIGS = Path(__file__).parent / "configs"


@dataclass
class RunResult:
    method: str
    strategy: str
    params: dict
    rates: list  # [{"kind", "tag", "param", "m", "n", "matching_rate"}]
    aruc: float
    auc: float
    gap: float
    tau: float
    curve: list  # [[tau, R, U], ...]
    converged: int
    extraction_seconds: float = 0.0

    @property
    def pos_rates(self):
        return [r["matching_rate"] for r in self.rates if r["tag"] == "positive"]

    @property
    def neg_rates(self):
        return [r["matching_rate"] for r in self.rates if r["tag"] == "negative"]


@dataclass
class EvalReport:
    config: dict
    backend: str
    target: dict
    suite: list
    runs: list = field(default_factory=list)
    best: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = asdict(self)
        out["version"] = REPORT_VERSION
        return out

    @classmethod
    def from_json(cls, obj) -> "EvalReport":
        if obj.get("version") != REPORT_VERSION:
            raise FormatError(f"unsupported report version {obj.get('version')!r}")
        try:
            runs = [RunResult(**r) for r in obj["runs"]]
            return cls(obj["config"], obj["backend"], obj["target"], obj["suite"], runs,
                       obj.get("best", {}), obj.get("timing", {}))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed report: {exc}") from None

    def best_run(self, method=None) -> RunResult:
        pool = [r for r in self.runs if method is None or r.method == method]
        if not pool:
            raise InputError(f"no runs for method {method!r}")
        return max(pool, key=lambda r: r.aruc)


def strip_timing(obj):
    """Copy of a report JSON with every timing field removed."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items()
                if k != "timing" and not k.endswith("seconds")}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read experiment config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise FormatError("experiment config must be a JSON object")
    return normalize_config(cfg)


def normalize_config(cfg: dict) -> dict:
    merged = _merge({k: v for k, v in DEFAULT_CONFIG.items() if k != "methods"}, cfg)
    merged.setdefault("methods", copy.deepcopy(DEFAULT_CONFIG["methods"]))
    for m in merged["methods"]:
        if "method" not in m:
            raise InputError("every methods[] entry needs a 'method'")
    return merged


def _extract_config(entry, n, seed, overrides) -> ExtractConfig:
    params = dict(entry.get("params", {}))
    params.update(overrides)
    strategy = entry.get("strategy", "TL").upper().lstrip("-")
    if len(strategy) != 2:
        raise InputError(f"strategy must look like TL/TR/RL/RR, got {strategy!r}")
    cw = CWConfig(**params.pop("cw", {}))
    known = {f.name for f in fields(ExtractConfig)} - {"cw", "n", "seed", "init_strategy", "label_strategy"}
    unknown = set(params) - known
    if unknown:
        raise InputError(f"unknown extractor parameters: {sorted(unknown)}")
    return ExtractConfig(n=n, seed=seed, init_strategy=strategy[0], label_strategy=strategy[1], cw=cw, **params)


def _grid_points(grid):
    points = [{}]
    for key, values in (grid or {}).items():
        points = [dict(p, **{key: v}) for p in points for v in values]
    return points


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except (BoundprintError, ValueError, ArithmeticError) as exc:
        raise StageError(name, exc) from exc


def score_fingerprint(fp, suite, r=100, threads=None):
    """Matching rates of every suspect plus the summary metrics."""
    rates = []
    for e in suite.entries:
        got = query_labels(fp, e.model, threads)
        m = int((got == fp.labels).sum())
        rates.append({"kind": e.kind, "tag": e.tag, "param": e.param, "m": m, "n": fp.n,
                      "matching_rate": m / fp.n})
    pos = [x["matching_rate"] for x in rates if x["tag"] == "positive"]
    neg = [x["matching_rate"] for x in rates if x["tag"] == "negative"]
    return rates, {
        "aruc": aruc(pos, neg, r),
        "auc": auc(pos, neg),
        "gap": gap(pos, neg),
        "tau": best_threshold(pos, neg, r),
        "curve": [list(p) for p in curve(pos, neg, r)],
    }


def run_experiment(cfg: dict, threads=None, log=None) -> EvalReport:
    """Train, build the suite, sweep every method's grid and score each fingerprint."""
    cfg = normalize_config(cfg)
    seed = int(cfg["seed"])
    say = log or (lambda msg: None)
    t_start = time.perf_counter()

    def build_data():
        spec = SyntheticSpec(seed=derive_seed(seed, "data"), **cfg["dataset"])
        full = generate(spec)
        return split(full, float(cfg["split"]), derive_seed(seed, "split"))

    train_data, test_data = _stage("data", build_data)
    say(f"data: {len(train_data)} train / {len(test_data)} test, d={train_data.d}, c={train_data.c}")

    tcfg = _stage("target", lambda: TrainConfig(seed=derive_seed(seed, "target-train"), **cfg["target"].get("train", {})))

    def build_target():
        net = make_network(cfg["target"].get("arch", "small-mlp"), train_data.d, train_data.c,
                           derive_seed(seed, "target-init"))
        return train(net, train_data, tcfg)

    target = _stage("target", build_target)
    target_info = {"arch": target.arch_id, "digest": digest(target),
                   "train_accuracy": accuracy(target, train_data), "test_accuracy": accuracy(target, test_data)}
    say(f"target: test accuracy {target_info['test_accuracy']:.3f}")

    suite_cfg = _stage("suite", lambda: SuiteConfig(seed=derive_seed(seed, "suite"), **cfg["suite"]))
    suite = _stage("suite", build_suspect_suite, target, train_data, test_data, suite_cfg, tcfg, threads)
    suite_info = [{"kind": e.kind, "tag": e.tag, "param": e.param, "accuracy": e.test_accuracy}
                  for e in suite.entries]
    say(f"suite: {len(suite.positives)} positive, {len(suite.negatives)} negative")

    report = EvalReport(cfg, kernels.BACKEND, target_info, suite_info)
    n, r = int(cfg["n"]), int(cfg["r"])
    for entry in cfg["methods"]:
        method = entry["method"]
        for point in _grid_points(entry.get("grid")):
            xcfg = _stage("extract", _extract_config, entry, n, derive_seed(seed, "extract", method), point)
            fp = _stage("extract", extract, method, target, train_data, xcfg, threads)
            rates, summary = _stage("verify", score_fingerprint, fp, suite, r, threads)
            suffix = "" if method == "random" else xcfg.suffix
            run = RunResult(method, suffix, fp.params, rates, converged=int(fp.converged.sum()),
                            extraction_seconds=fp.seconds, **summary)
            report.runs.append(run)
            say(f"{method}{suffix} {point}: ARUC {run.aruc:.3f} gap {run.gap:+.2f} "
                f"({fp.seconds:.2f}s)")
    for method in dict.fromkeys(run.method for run in report.runs):
        idx = max((i for i, run in enumerate(report.runs) if run.method == method),
                  key=lambda i: report.runs[i].aruc)
        report.best[method] = idx
    report.timing = {"total_seconds": time.perf_counter() - t_start}
    return report


def emit_report(report: EvalReport, fmt: str, path, run_index: int | None = None) -> None:
    """Write the report as JSON, or the curve of one run as CSV."""
    if fmt == "json":
        Path(path).write_text(json.dumps(report.to_json(), indent=2))
        return
    if fmt != "csv":
        raise InputError(f"unknown report format {fmt!r} (json or csv)")
    if not report.runs:
        raise InputError("report has no runs")
    if run_index is None:
        run_index = max(range(len(report.runs)), key=lambda i: report.runs[i].aruc)
    run = report.runs[run_index]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "R", "U", "min"])
        for tau, R, U in run.curve:
            w.writerow([repr(tau), repr(R), repr(U), repr(min(R, U))])
        w.writerow(["summary", f"aruc={run.aruc!r}", f"auc={run.auc!r}", f"gap={run.gap!r}"])


def load_report(path) -> EvalReport:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read report {path}: {exc}") from None
    return EvalReport.from_json(obj)


def with_overrides(cfg: dict, **changes) -> dict:
    return _merge(cfg, changes)

