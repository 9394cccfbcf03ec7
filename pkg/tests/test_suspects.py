import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boundprint.errors import InputError
from boundprint.forest import Forest
from boundprint.modelio import digest
from boundprint.nn import TrainConfig, accuracy, forward_batch, init_network
from boundprint.suspects import (SuiteConfig, SuspectEntry, SuspectSet, _floor_count, build_suspect_suite,
                                 default_fp_step, ftal, ftll, load_suite, magnitude_masks, mask_units,
                                 prune_units, pruning_ladder, rtal, rtll, save_suite, suite_summary,
                                 weight_prune)
from boundprint.verify import oracle_for

FT = TrainConfig(learning_rate=0.001, epochs=3, batch_size=32, seed=4)


def same_bits(a, b):
    return a.tobytes() == b.tobytes()


def test_ftll_and_rtll_freeze_hidden_layers(target, blobs):
    for net in (ftll(target, blobs[0], FT), rtll(target, blobs[0], FT, seed=8)):
        for l in range(len(target.weights) - 1):
            assert same_bits(net.weights[l], target.weights[l])
            assert same_bits(net.biases[l], target.biases[l])
        assert not same_bits(net.weights[-1], target.weights[-1])


def test_rtll_reinitializes_output_layer(target, blobs):
    zero_epochs = TrainConfig(epochs=0)
    net = rtll(target, blobs[0], zero_epochs, seed=8)
    W = net.weights[-1]
    limit = math.sqrt(6.0 / sum(W.shape))
    assert np.all(np.abs(W) <= limit) and not np.any(net.biases[-1])
    assert not np.allclose(W, target.weights[-1])


def test_ftal_and_rtal_touch_every_layer(target, blobs):
    for net in (ftal(target, blobs[0], FT), rtal(target, blobs[0], FT, seed=8)):
        assert all(not same_bits(a, b) for a, b in zip(net.weights, target.weights))


@pytest.mark.parametrize("frac,total,count", [(0.3, 10, 3), (0.7, 10, 7), (0.1, 1348, 134), (0.5, 3, 1)])
def test_floor_count(frac, total, count):
    assert _floor_count(frac, total) == count


@settings(max_examples=20, deadline=None)
@given(p=st.floats(0.05, 0.95), seed=st.integers(0, 100))
def test_magnitude_masks_exact_sparsity(p, seed):
    net = init_network([5, 9, 3], seed)
    masks = magnitude_masks(net, p)
    dropped = sum(int((~m).sum()) for m in masks)
    assert dropped == _floor_count(p, net.n_weights)
    kept = np.concatenate([np.abs(W)[m] for W, m in zip(net.weights, masks)])
    gone = np.concatenate([np.abs(W)[~m] for W, m in zip(net.weights, masks)])
    if len(gone) and len(kept):
        assert gone.max() <= kept.min()


def test_weight_prune_mask_persists_through_retraining(target, blobs):
    p = 0.4
    masks = magnitude_masks(target, p)
    net = weight_prune(target, p, blobs[0], FT)
    zeros = sum(int(np.sum(W == 0.0)) for W in net.weights)
    assert zeros >= _floor_count(p, target.n_weights)
    for W, m in zip(net.weights, masks):
        assert np.all(W[~m] == 0.0)
        assert not np.any(np.signbit(W[~m]))


def test_prune_rejects_bad_fraction(target):
    with pytest.raises(InputError):
        magnitude_masks(target, 1.0)
    with pytest.raises(InputError):
        prune_units(target, 0.0)


@pytest.mark.parametrize("c", [1 / 16, 0.25, 0.5, 0.9])
def test_filter_prune_shrink_equals_mask(target, blobs, c):
    shrunk = prune_units(target, c)
    masked = mask_units(target, c)
    removed = _floor_count(c, 32)
    assert [W.shape[1] for W in shrunk.weights[:-1]] == [32 - removed] * 2
    np.testing.assert_allclose(forward_batch(shrunk, blobs[1].points),
                               forward_batch(masked, blobs[1].points), rtol=0, atol=1e-12)


def test_filter_prune_drops_lowest_l1_units():
    net = init_network([3, 4, 2], 0)
    W = np.array(net.weights[0])
    W[:, 2] = 1e-3
    net = net.with_params([W, net.weights[1]], net.biases)
    shrunk = prune_units(net, 0.25)
    assert shrunk.weights[0].shape == (3, 3)
    np.testing.assert_array_equal(shrunk.weights[0], np.delete(W, 2, axis=1))


def test_default_fp_step():
    assert default_fp_step(init_network([2, 32, 32, 2], 0)) == 1 / 16
    assert default_fp_step(init_network([2, 16, 2], 0)) == 1 / 16
    assert default_fp_step(init_network([2, 10, 2], 0)) == 0.1


@pytest.mark.parametrize("mode", ["WP", "FP"])
def test_ladder_respects_accuracy_budget(target, blobs, mode):
    base = accuracy(target, blobs[1])
    rungs = pruning_ladder(target, blobs[0], blobs[1], mode, FT, step=0.25)
    assert rungs, "at least the first rung should survive on easy blobs"
    fracs = [f for f, _, _ in rungs]
    assert fracs == [0.25 * (i + 1) for i in range(len(fracs))]
    for _, net, acc in rungs:
        assert base - acc <= 0.03 + 1e-12
        assert acc == accuracy(net, blobs[1])


def test_ladder_stops_at_first_violation(target, blobs):
    rungs = pruning_ladder(target, blobs[0], blobs[1], "WP", TrainConfig(epochs=0), step=0.3,
                           max_acc_loss=0.0)
    # without retraining, heavy pruning must eventually cost accuracy
    assert len(rungs) < 3


def test_suspect_set_validates_tags(target):
    with pytest.raises(InputError):
        SuspectSet([SuspectEntry(target, "negative", "FTLL")])
    with pytest.raises(InputError):
        SuspectSet([SuspectEntry(target, "positive", "mystery")])


@pytest.fixture(scope="module")
def small_suite(target, blobs):
    cfg = SuiteConfig(n_same_arch=2, n_diff_arch=1, n_forests=1, n_trees=5, finetune_lr=0.001,
                      wp_step=0.3, fp_step=0.25, seed=5)
    return build_suspect_suite(target, blobs[0], blobs[1], cfg, TrainConfig(epochs=5, seed=2))


def test_suite_composition(small_suite):
    kinds = [e.kind for e in small_suite.entries]
    for k in ("FTLL", "FTAL", "RTLL", "RTAL"):
        assert kinds.count(k) == 1
    assert kinds.count("same-arch") == 2 and kinds.count("diff-arch") == 1
    assert kinds.count("forest") == 1
    assert any(k == "WP" for k in kinds) and any(k == "FP" for k in kinds)
    forest = next(e for e in small_suite.entries if e.kind == "forest")
    assert isinstance(forest.model, Forest) and forest.model.n_trees == 5
    diff = next(e for e in small_suite.entries if e.kind == "diff-arch")
    assert diff.model.arch_id == "tiny-mlp"
    assert all(0.0 <= e.test_accuracy <= 1.0 for e in small_suite.entries)


def test_suite_is_deterministic_across_threads(target, blobs, small_suite):
    cfg = SuiteConfig(n_same_arch=2, n_diff_arch=1, n_forests=1, n_trees=5, finetune_lr=0.001,
                      wp_step=0.3, fp_step=0.25, seed=5)
    again = build_suspect_suite(target, blobs[0], blobs[1], cfg, TrainConfig(epochs=5, seed=2), threads=3)
    assert [digest(e.model) for e in again.entries] == [digest(e.model) for e in small_suite.entries]


def test_suite_save_load_roundtrip(tmp_path, target, small_suite):
    manifest = save_suite(small_suite, tmp_path / "suite", target)
    back = load_suite(manifest)
    assert suite_summary(back) == suite_summary(small_suite)
    x = np.full(8, 0.5)
    for a, b in zip(back.entries, small_suite.entries):
        assert oracle_for(a.model).query(x) == oracle_for(b.model).query(x)
