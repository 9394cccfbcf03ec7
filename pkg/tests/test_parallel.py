import numpy as np
from hypothesis import given, strategies as st

from boundprint.parallel import default_threads, derive_seed, ordered_map, stream


def test_streams_are_independent_and_reproducible():
    a = stream(5, 0).random(4)
    assert np.array_equal(a, stream(5, 0).random(4))
    assert not np.array_equal(a, stream(5, 1).random(4))
    assert not np.array_equal(a, stream(6, 0).random(4))


def test_string_keys_are_stable():
    assert derive_seed(0, "suite", 3) == derive_seed(0, "suite", 3)
    assert derive_seed(0, "suite") != derive_seed(0, "target")


@given(st.lists(st.integers(), max_size=30), st.integers(1, 8))
def test_ordered_map_preserves_order(items, threads):
    assert ordered_map(lambda v: v * 2, items, threads) == [v * 2 for v in items]


def test_default_threads_env(monkeypatch):
    monkeypatch.setenv("BMK_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("BMK_THREADS", "junk")
    assert default_threads() >= 1
