"""Robustness, uniqueness and their combined area metric, plus AUC and gap."""

from __future__ import annotations

import numpy as np

from .errors import InputError


def _rates(values, what):
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise InputError(f"{what} population is empty")
    if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
        raise InputError(f"{what} matching rates must lie in [0, 1]")
    return arr


def robustness(pos_rates, tau: float) -> float:
    """Fraction of positive suspects verified at threshold ``tau`` (rate >= tau)."""
    pos = _rates(pos_rates, "positive")
    return int(np.count_nonzero(pos >= tau)) / pos.size


def uniqueness(neg_rates, tau: float) -> float:
    """Fraction of negative suspects rejected at ``tau`` (rate < tau)."""
    neg = _rates(neg_rates, "negative")
    return int(np.count_nonzero(neg < tau)) / neg.size


def thresholds(r: int) -> list:
    if r < 1:
        raise InputError("r must be at least 1")
    return [t / r for t in range(1, r + 1)]


def curve(pos_rates, neg_rates, r: int = 100) -> list:
    """``[(tau, R, U), ...]`` at the right end of each of ``r`` equal intervals."""
    pos = _rates(pos_rates, "positive")
    neg = _rates(neg_rates, "negative")
    return [(tau, robustness(pos, tau), uniqueness(neg, tau)) for tau in thresholds(r)]


def aruc(pos_rates, neg_rates, r: int = 100) -> float:
    """Area under min(R, U), estimated with right endpoints on ``r`` intervals."""
    pts = curve(pos_rates, neg_rates, r)
    return sum(min(R, U) for _, R, U in pts) / r


def best_threshold(pos_rates, neg_rates, r: int = 100) -> float:
    """Grid threshold maximizing min(R, U); the smallest one on ties."""
    best_tau, best_val = None, -1.0
    for tau, R, U in curve(pos_rates, neg_rates, r):
        if min(R, U) > best_val:
            best_tau, best_val = tau, min(R, U)
    return best_tau


def auc(pos_rates, neg_rates) -> float:
    """Probability a random positive outranks a random negative; ties count half."""
    pos = _rates(pos_rates, "positive")
    neg = _rates(neg_rates, "negative")
    greater = np.count_nonzero(pos[:, None] > neg[None, :])
    ties = np.count_nonzero(pos[:, None] == neg[None, :])
    return (greater + 0.5 * ties) / (pos.size * neg.size)


def gap(pos_rates, neg_rates) -> float:
    return float(_rates(pos_rates, "positive").min() - _rates(neg_rates, "negative").max())
