"""Shared independent oracles for the test suite.

These deliberately avoid the library's own computation paths: finite
differences for gradients, brute-force pair counting for AUC, and plain
numpy re-implementations of forward formulas where tests need them.
"""
from __future__ import annotations

from typing import Callable

import numpy as np


def finite_difference(loss_fn: Callable[[], float], param_value: np.ndarray,
                      step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar loss w.r.t. one parameter.

    ``param_value`` is mutated in place entry by entry and restored; the loss
    function must re-run the forward pass on each call.
    """
    grad = np.zeros_like(param_value)
    it = np.nditer(param_value, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = param_value[idx]
        param_value[idx] = orig + step
        up = loss_fn()
        param_value[idx] = orig - step
        down = loss_fn()
        param_value[idx] = orig
        grad[idx] = (up - down) / (2.0 * step)
    return grad


def relative_gradient_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / denom)


def pairwise_auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """O(P*N) concordance count: positives above negatives, ties worth 1/2."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=float)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))
