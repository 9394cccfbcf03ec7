"""Binary model container.

Layout (little-endian)::

    b"BMK1" | u32 header length | JSON header | f64 parameter blocks

Networks store W then b for each layer after the header. Forests carry their
trees inside the header and have no parameter blocks.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .forest import Forest, Tree
from .nn import Network

MAGIC = b"BMK1"
VERSION = 1


def _pack(header, blocks=()):
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(b, dtype="<f8").tobytes() for b in blocks)
    return MAGIC + struct.pack("<I", len(head)) + head + body


def model_bytes(model) -> bytes:
    if isinstance(model, Network):
        header = {
            "version": VERSION,
            "kind": "network",
            "arch_id": model.arch_id,
            "dims": model.layer_sizes,
            "activations": list(model.activations),
            "lineage": [list(item) for item in model.lineage],
        }
        return _pack(header, model.params())
    if isinstance(model, Forest):
        header = {
            "version": VERSION,
            "kind": "forest",
            "input_dim": model.input_dim,
            "num_classes": model.num_classes,
            "seed": model.seed,
            "trees": [t.to_dict() for t in model.trees],
        }
        return _pack(header)
    raise TypeError(f"cannot serialize {type(model).__name__}")


def digest(model) -> str:
    return hashlib.sha256(model_bytes(model)).hexdigest()


def save_model(model, path) -> None:
    Path(path).write_bytes(model_bytes(model))


def parse_model(raw: bytes):
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise FormatError("not a model file (bad magic)")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise FormatError("truncated model header")
    try:
        header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt model header: {exc}") from None
    if not isinstance(header, dict):
        raise FormatError("model header is not an object")
    version = header.get("version")
    if version != VERSION:
        raise FormatError(f"unsupported model format version {version!r} (expected {VERSION})")
    body = raw[8 + hlen:]
    kind = header.get("kind")
    if kind == "network":
        return _parse_network(header, body)
    if kind == "forest":
        if body:
            raise FormatError("unexpected trailing bytes after forest header")
        try:
            trees = tuple(Tree.from_dict(t) for t in header["trees"])
            return Forest(trees, int(header["input_dim"]), int(header["num_classes"]), int(header["seed"]))
        except KeyError as exc:
            raise FormatError(f"forest header missing {exc}") from None
    raise FormatError(f"unknown model kind {kind!r}")


def _parse_network(header, body):
    try:
        dims = [int(v) for v in header["dims"]]
        acts = list(header["activations"])
        arch = str(header["arch_id"])
        lineage = tuple(tuple(item) for item in header.get("lineage", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"network header invalid: {exc}") from None
    if len(dims) < 2 or len(acts) != len(dims) - 1:
        raise FormatError("network header dims/activations disagree")
    expected = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    if len(body) != 8 * expected:
        raise FormatError(f"parameter block has {len(body)} bytes, expected {8 * expected} (truncated?)")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    weights, biases, pos = [], [], 0
    for a, b in zip(dims[:-1], dims[1:]):
        weights.append(flat[pos:pos + a * b].reshape(a, b))
        pos += a * b
        biases.append(flat[pos:pos + b])
        pos += b
    return Network(tuple(weights), tuple(biases), tuple(acts), arch, lineage)


def load_model(path):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read model {path}: {exc}") from None
    return parse_model(raw)
