"""Batch-mean and jackknife error estimates."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np


def ksum(values) -> float:
    """Compensated (exactly rounded) sum of a flat array."""
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def batch_stderr(batches: np.ndarray) -> np.ndarray:
    """Standard error of the mean from independent batch means (axis 0)."""
    batches = np.asarray(batches, dtype=float)
    n = batches.shape[0]
    if n < 2:
        return np.full(batches.shape[1:], np.nan)
    return batches.std(axis=0, ddof=1) / math.sqrt(n)


def jackknife(batches: np.ndarray, func: Callable[[np.ndarray], np.ndarray]):
    """Jackknife estimate of ``func(mean)`` over batch means.

    ``func`` receives an array shaped like one batch and may return any array.
    Returns ``(value, stderr)`` where ``value`` is ``func`` of the full mean.
    """
    batches = np.asarray(batches, dtype=float)
    n = batches.shape[0]
    total = batches.sum(axis=0)
    value = np.asarray(func(total / n), dtype=float)
    if n < 2:
        return value, np.full(value.shape, np.nan)
    leave = np.stack([np.asarray(func((total - batches[i]) / (n - 1)), dtype=float) for i in range(n)])
    err = np.sqrt((n - 1) / n * ((leave - leave.mean(axis=0)) ** 2).sum(axis=0))
    return value, err


def double_factorial_odd(k: int) -> int:
    """(2k - 1)!! with the convention (-1)!! = 1."""
    out = 1
    for j in range(1, 2 * k, 2):
        out *= j
    return out


def within_sigma(value, bound, stderr, n_sigma: float = 3.0, atol: float = 1e-12) -> np.ndarray:
    """True where ``value <= bound`` up to ``n_sigma`` standard errors."""
    value, bound, stderr = (np.asarray(a, dtype=float) for a in (value, bound, stderr))
    return value <= bound + n_sigma * np.nan_to_num(stderr) + atol * np.maximum(1.0, np.abs(bound))
