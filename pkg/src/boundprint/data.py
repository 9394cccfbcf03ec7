"""Datasets in the unit box: synthetic generators, CSV ingestion, splitting."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray
    labels: np.ndarray
    num_classes: int
    rescale: dict | None = field(default=None)

    def __post_init__(self):
        X = np.array(self.points, dtype=np.float64)
        y = np.array(self.labels)
        if X.ndim != 2 or X.shape[0] == 0:
            raise InputError(f"points must be a non-empty 2-d array, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise InputError(f"{y.shape[0] if y.ndim else 0} labels for {X.shape[0]} points")
        if y.dtype.kind not in "iu":
            if not np.all(np.mod(y, 1) == 0):
                raise InputError("labels must be integers")
        y = y.astype(np.int64)
        if self.num_classes < 2:
            raise InputError("num_classes must be >= 2")
        if np.any(y < 0) or np.any(y >= self.num_classes):
            raise InputError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(X)) or np.any(X < 0.0) or np.any(X > 1.0):
            raise InputError("points must lie in the unit box [0,1]^d")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "labels", y)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def c(self) -> int:
        return self.num_classes

    def __len__(self):
        return self.points.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.points[idx], self.labels[idx], self.num_classes, self.rescale)


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "blobs"
    n_per_class: int = 100
    c: int = 4
    noise_sigma: float = 0.1
    d: int = 2
    seed: int = 0

    def validate(self):
        if self.kind not in ("blobs", "moons", "spirals"):
            raise InputError(f"unknown synthetic kind {self.kind!r}")
        if self.n_per_class < 1:
            raise InputError("n_per_class must be positive")
        if self.c < 2:
            raise InputError("need at least 2 classes")
        if self.noise_sigma < 0:
            raise InputError("noise_sigma must be non-negative")
        if self.kind == "moons" and self.c != 2:
            raise InputError("moons has exactly 2 classes")
        if self.kind == "blobs" and self.d < 2:
            raise InputError("blobs need d >= 2")
        if self.kind in ("moons", "spirals") and self.d != 2:
            raise InputError(f"{self.kind} is 2-dimensional")


def minmax_rescale(X):
    """Per-column affine map onto [0,1]; zero-range columns map to 0."""
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (X - lo) / safe, 0.0)
    return np.clip(out, 0.0, 1.0), {"min": lo.tolist(), "max": hi.tolist()}


def generate(spec: SyntheticSpec) -> Dataset:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, c = spec.n_per_class, spec.c
    labels = np.repeat(np.arange(c), n)
    if spec.kind == "blobs":
        centers = rng.uniform(0.0, 1.0, size=(c, spec.d))
        X = centers[labels] + spec.noise_sigma * rng.standard_normal((n * c, spec.d))
    elif spec.kind == "moons":
        theta = np.linspace(0.0, np.pi, n)
        upper = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        lower = np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=1)
        X = np.concatenate([upper, lower]) + spec.noise_sigma * rng.standard_normal((2 * n, 2))
    else:
        r = np.linspace(0.1, 1.0, n)
        parts = []
        for arm in range(c):
            theta = 3.0 * np.pi * r + 2.0 * np.pi * arm / c
            parts.append(np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1))
        X = np.concatenate(parts) + spec.noise_sigma * rng.standard_normal((n * c, 2))
    X, params = minmax_rescale(X)
    order = rng.permutation(n * c)
    return Dataset(X[order], labels[order], c, params)


def write_manifest(spec: SyntheticSpec, data: Dataset, path) -> None:
    payload = {"spec": asdict(spec), "seed": spec.seed, "n": len(data), "d": data.d,
               "c": data.c, "rescale": data.rescale}
    Path(path).write_text(json.dumps(payload, indent=2))


def load_csv(path, header: bool = False, rescale: bool = True, num_classes: int | None = None) -> Dataset:
    """Rows are feature columns followed by an integer label."""
    rows, labels = [], []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise FormatError(f"row {lineno}: need at least one feature and a label")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(f"row {lineno}: expected {width} columns, got {len(row)}")
            try:
                feats = [float(cell) for cell in row[:-1]]
            except ValueError:
                raise FormatError(f"row {lineno}: non-numeric feature") from None
            try:
                lab = int(row[-1])
            except ValueError:
                raise FormatError(f"row {lineno}: label {row[-1]!r} is not an integer") from None
            if lab < 0 or (num_classes is not None and lab >= num_classes):
                raise FormatError(f"row {lineno}: label {lab} outside [0, {num_classes})")
            if not all(np.isfinite(feats)):
                raise FormatError(f"row {lineno}: non-finite feature")
            rows.append(feats)
            labels.append(lab)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    X = np.array(rows, dtype=np.float64)
    params = None
    if rescale:
        X, params = minmax_rescale(X)
    elif np.any(X < 0) or np.any(X > 1):
        raise FormatError(f"{path}: features outside [0,1] and rescaling disabled")
    c = num_classes if num_classes is not None else max(2, max(labels) + 1)
    return Dataset(X, np.array(labels), c, params)


def emit_csv(data: Dataset, path, header: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{i}" for i in range(data.d)] + ["label"])
        for x, y in zip(data.points, data.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def split(data: Dataset, fraction: float, seed: int):
    """Stratified split into (train, test) with ``round(fraction * N)`` train points."""
    if not 0.0 < fraction < 1.0:
        raise InputError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    classes = np.unique(data.labels)
    per_class = {int(k): np.flatnonzero(data.labels == k) for k in classes}
    exact = {k: fraction * len(v) for k, v in per_class.items()}
    take = {k: int(np.floor(e)) for k, e in exact.items()}
    remaining = int(round(fraction * len(data))) - sum(take.values())
    by_remainder = sorted(per_class, key=lambda k: (-(exact[k] - take[k]), k))
    for k in by_remainder[:max(remaining, 0)]:
        take[k] += 1
    train_idx, test_idx = [], []
    for k, idx in per_class.items():
        perm = rng.permutation(idx)
        train_idx.append(perm[:take[k]])
        test_idx.append(perm[take[k]:])
    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    if len(tr) == 0 or len(te) == 0:
        raise InputError("split would leave one side empty")
    return data.subset(tr), data.subset(te)
