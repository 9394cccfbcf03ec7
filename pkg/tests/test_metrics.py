import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boundprint.errors import InputError
from boundprint.metrics import aruc, auc, best_threshold, curve, gap, robustness, thresholds, uniqueness


def brute_aruc(pos, neg, r):
    # exact rational enumeration of the right-endpoint sum
    total = Fraction(0)
    for t in range(1, r + 1):
        tau = Fraction(t, r)
        R = Fraction(sum(Fraction(p).limit_denominator(10**9) >= tau for p in pos), len(pos))
        U = Fraction(sum(Fraction(q).limit_denominator(10**9) < tau for q in neg), len(neg))
        total += min(R, U)
    return float(total / r)


def test_derived_case():
    assert aruc([0.6], [0.4]) == pytest.approx(0.20, abs=1e-12)


def test_perfect_and_worst_separation():
    assert aruc([1.0], [0.0]) == 1.0
    assert aruc([0.0], [1.0]) == 0.0


def test_threshold_semantics():
    assert robustness([0.5, 0.49], 0.5) == 0.5
    assert uniqueness([0.5, 0.49], 0.5) == 0.5
    assert thresholds(4) == [0.25, 0.5, 0.75, 1.0]
    assert curve([1.0], [0.0], 2) == [(0.5, 1.0, 1.0), (1.0, 1.0, 1.0)]


rates = st.lists(st.integers(0, 100).map(lambda v: v / 100), min_size=1, max_size=8)


@settings(max_examples=200)
@given(pos=rates, neg=rates)
def test_aruc_matches_brute_force(pos, neg):
    assert abs(aruc(pos, neg, 100) - brute_aruc(pos, neg, 100)) <= 1e-12


@given(pos=rates, neg=rates)
def test_aruc_bounded_and_best_tau_on_grid(pos, neg):
    a = aruc(pos, neg)
    assert 0.0 <= a <= 1.0
    tau = best_threshold(pos, neg)
    assert tau in thresholds(100)
    vals = {t: min(R, U) for t, R, U in curve(pos, neg)}
    assert vals[tau] == max(vals.values())
    assert tau == min(t for t, v in vals.items() if v == vals[tau])


@given(pos=rates, neg=rates)
def test_auc_matches_pair_count(pos, neg):
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in itertools.product(pos, neg))
    assert auc(pos, neg) == pytest.approx(wins / (len(pos) * len(neg)), abs=1e-12)


def test_auc_and_gap_values():
    assert auc([1.0, 0.9], [0.1, 0.0]) == 1.0
    assert auc([0.5], [0.5]) == 0.5
    assert gap([1.0, 0.7], [0.09, 0.0]) == pytest.approx(0.61)


@pytest.mark.parametrize("pos,neg", [([], [0.1]), ([0.1], []), ([1.2], [0.1]), ([0.5], [float("nan")])])
def test_invalid_populations(pos, neg):
    with pytest.raises(InputError):
        aruc(pos, neg)


def test_invalid_r():
    with pytest.raises(InputError):
        aruc([0.5], [0.5], 0)


def test_robustness_and_uniqueness_examples():
    assert robustness([1, 1, 1], 0.9) == 1.0
    assert robustness([0.6, 0.4], 0.5) == 0.5
    assert robustness([0.0, 0.3], 0.0) == 1.0
    assert uniqueness([0, 0], 0.01) == 1.0
    assert uniqueness([0.5], 0.5) == 0.0
    assert uniqueness([1.0], 1.0) == 0.0


@settings(max_examples=150)
@given(pos=rates, neg=rates)
def test_curve_monotone_and_aruc_bounds(pos, neg):
    pts = curve(pos, neg)
    Rs = [R for _, R, _ in pts]
    Us = [U for _, _, U in pts]
    assert all(a >= b for a, b in zip(Rs, Rs[1:]))
    assert all(a <= b for a, b in zip(Us, Us[1:]))
    a = aruc(pos, neg)
    assert a <= min(max(R, U) for R, U in zip(Rs, Us)) + 1e-12
    assert (a == 1.0) == all(R == 1.0 and U == 1.0 for R, U in zip(Rs, Us))


@given(pos=rates, neg=rates, times=st.integers(2, 4))
def test_aruc_invariant_to_population_duplication(pos, neg, times):
    assert aruc(pos * times, neg) == aruc(pos, neg)
    assert aruc(pos, neg * times) == aruc(pos, neg)


@given(pos=rates, neg=rates)
def test_positive_gap_means_auc_one(pos, neg):
    if gap(pos, neg) > 0:
        assert auc(pos, neg) == 1.0
    else:
        assert gap(pos, neg) <= 0
