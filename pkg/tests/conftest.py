import numpy as np
import pytest

from boundprint.data import SyntheticSpec, generate, split
from boundprint.nn import TrainConfig, make_network, train


@pytest.fixture(scope="session")
def blobs():
    full = generate(SyntheticSpec(kind="blobs", n_per_class=100, c=4, noise_sigma=0.1, d=8, seed=7))
    return split(full, 0.8, 7)


@pytest.fixture(scope="session")
def train_cfg():
    return TrainConfig(learning_rate=0.01, epochs=15, batch_size=32, seed=3)


@pytest.fixture(scope="session")
def target(blobs, train_cfg):
    train_data, _ = blobs
    return train(make_network("small-mlp", train_data.d, train_data.c, 11), train_data, train_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary is printed at the end of the run."""

    def record(number, name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} ({detail})"
        print(line)
        _ACCEPTANCE.append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
