"""Label-only verification of suspect classifiers against a fingerprint."""

from __future__ import annotations

import json
import subprocess
import sys
import threading
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InputError, QueryError
from .forest import Forest
from .modelio import digest, load_model
from .nn import Network, predict_label
from .parallel import ordered_map


class ClassifierOracle:
    """Anything that maps a point of the unit box to a label.

    Subclasses set ``input_dim`` and ``kind`` and implement ``query``.
    ``concurrent`` says whether ``query`` may be called from several threads.
    """

    kind = "oracle"
    input_dim: int | None = None
    concurrent = True

    def query(self, x) -> int:
        raise NotImplementedError

    def descriptor(self) -> dict:
        return {"kind": self.kind}


class NetworkOracle(ClassifierOracle):
    kind = "network"

    def __init__(self, net: Network):
        self.net = net
        self.input_dim = net.input_dim

    def query(self, x):
        return predict_label(self.net, x)

    def descriptor(self):
        return {"kind": self.kind, "digest": digest(self.net)}


class ForestOracle(ClassifierOracle):
    kind = "forest"

    def __init__(self, forest: Forest):
        self.forest = forest
        self.input_dim = forest.input_dim

    def query(self, x):
        return self.forest.predict(x)

    def descriptor(self):
        return {"kind": self.kind, "digest": digest(self.forest)}


class CallableOracle(ClassifierOracle):
    kind = "callable"

    def __init__(self, fn, input_dim=None, resize=None):
        self.fn = fn
        self.input_dim = input_dim
        self.resize = resize

    def query(self, x):
        if self.resize is not None:
            x = self.resize(x)
        return int(self.fn(x))


class SubprocessOracle(ClassifierOracle):
    """Queries a child process speaking line-delimited JSON.

    Each request is ``{"point": [...]}`` and each reply ``{"label": int}``.
    """

    kind = "remote"
    concurrent = False

    def __init__(self, argv, input_dim=None, timeout=10.0, retries=2):
        self.argv = list(argv)
        self.input_dim = input_dim
        self.timeout = timeout
        self.retries = retries
        self._proc = None
        self._lock = threading.Lock()

    def _spawn(self):
        self._proc = subprocess.Popen(
            self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )

    def _roundtrip(self, payload):
        if self._proc is None or self._proc.poll() is not None:
            self._spawn()
        self._proc.stdin.write(payload + "\n")
        self._proc.stdin.flush()
        result = {}

        def read():
            result["line"] = self._proc.stdout.readline()

        reader = threading.Thread(target=read, daemon=True)
        reader.start()
        reader.join(self.timeout)
        if reader.is_alive():
            self.close()
            raise TimeoutError(f"no reply within {self.timeout}s")
        line = result.get("line", "")
        if not line:
            self.close()
            raise ConnectionError("oracle process closed its output")
        reply = json.loads(line)
        if "label" not in reply:
            raise ValueError(f"reply without label: {reply.get('error', reply)}")
        return int(reply["label"])

    def query(self, x):
        payload = json.dumps({"point": [float(v) for v in np.asarray(x, dtype=np.float64)]})
        with self._lock:
            last = None
            for _ in range(self.retries + 1):
                try:
                    return self._roundtrip(payload)
                except (OSError, TimeoutError, ValueError, ConnectionError) as exc:
                    last = exc
            raise RuntimeError(f"remote oracle failed after {self.retries + 1} attempts: {last}")

    def close(self):
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except OSError:
                pass
            self._proc = None

    def descriptor(self):
        return {"kind": self.kind, "argv": self.argv}


def oracle_for(model) -> ClassifierOracle:
    if isinstance(model, ClassifierOracle):
        return model
    if isinstance(model, Network):
        return NetworkOracle(model)
    if isinstance(model, Forest):
        return ForestOracle(model)
    raise InputError(f"no oracle adapter for {type(model).__name__}")


def serve(model, stdin=None, stdout=None) -> None:
    """Answer line-delimited JSON queries for ``model`` until EOF."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    oracle = oracle_for(model)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            point = json.loads(line)["point"]
            reply = {"label": int(oracle.query(np.asarray(point, dtype=np.float64)))}
        except Exception as exc:  # noqa: BLE001 - every failure becomes a reply
            reply = {"error": str(exc)}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()


def serve_path(path):
    serve(load_model(path))


@dataclass(frozen=True)
class Verdict:
    matching_rate: float
    m: int
    n: int
    tau: float
    decision: int
    mask: tuple

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.m, self.n)

    def to_json(self) -> dict:
        return {
            "matching_rate": self.matching_rate,
            "m": self.m,
            "n": self.n,
            "tau": self.tau,
            "decision": self.decision,
            "mask": [bool(v) for v in self.mask],
        }


def query_labels(fp, oracle, threads=None) -> np.ndarray:
    oracle = oracle_for(oracle)
    if oracle.input_dim is not None and oracle.input_dim != fp.d and getattr(oracle, "resize", None) is None:
        raise InputError(f"oracle expects {oracle.input_dim}-d inputs, fingerprint has d={fp.d}")

    def ask(p):
        try:
            return int(oracle.query(fp.points[p]))
        except Exception as exc:  # noqa: BLE001 - re-raised with the point index
            raise QueryError(f"oracle failed on point {p}: {exc}", index=p) from exc

    return np.array(ordered_map(ask, range(fp.n), threads if oracle.concurrent else 1), dtype=np.int64)


def match_mask(fp, oracle, threads=None) -> np.ndarray:
    return query_labels(fp, oracle, threads) == fp.labels


def matching_rate(fp, oracle, threads=None) -> float:
    """Fraction of fingerprint points on which ``oracle`` reproduces the stored label."""
    mask = match_mask(fp, oracle, threads)
    return int(mask.sum()) / len(mask)


def verify(fp, oracle, tau: float, threads=None) -> Verdict:
    if not 0.0 <= tau <= 1.0:
        raise InputError(f"tau must be in [0, 1], got {tau}")
    mask = match_mask(fp, oracle, threads)
    m, n = int(mask.sum()), len(mask)
    rate = m / n
    return Verdict(rate, m, n, float(tau), int(rate >= tau), tuple(bool(v) for v in mask))

