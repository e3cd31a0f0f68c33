"""Small numeric helpers shared across the package.

Reductions over outer Monte Carlo draws use a fixed pairwise tree over the
index-ordered array so results do not depend on chunking or thread count.
"""

from __future__ import annotations

import numpy as np


def pairwise_sum(values: np.ndarray) -> float:
    """Sum along axis 0 with a fixed binary reduction tree."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        return float(arr)
    n = arr.shape[0]
    if n == 0:
        return 0.0
    while n > 1:
        even = n - (n % 2)
        paired = arr[0:even:2] + arr[1:even:2]
        if n % 2:
            paired = np.concatenate([paired, arr[even:even + 1]], axis=0)
        arr = paired
        n = arr.shape[0]
    return float(arr[0]) if arr[0].ndim == 0 else arr[0]


def pairwise_mean(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=np.float64)
    return pairwise_sum(values) / values.shape[0]


def mean_and_stderr(values: np.ndarray) -> tuple[float, float]:
    """Mean of iid per-draw values and the standard error of that mean.

    Equals the delete-one jackknife for the mean; draw order is fixed by
    sample index, so the result is reproducible across thread counts.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    mean = pairwise_sum(values) / n
    if n < 2:
        return mean, 0.0
    var = pairwise_sum((values - mean) ** 2) / (n - 1)
    return mean, float(np.sqrt(var / n))


def logsumexp(a: np.ndarray, axis: int = -1, b: np.ndarray | None = None) -> np.ndarray:
    """Max-subtracted log-sum-exp, optionally with log-domain offsets ``b``.

    ``b`` (same broadcast shape as ``a``) is added to ``a`` before the
    reduction; it carries the per-sample log-weights of a quadrature or the
    -log(N) of a Monte Carlo average.
    """
    a = np.asarray(a, dtype=np.float64)
    if b is not None:
        a = a + b
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    out = np.log(np.sum(np.exp(a - amax), axis=axis)) + np.squeeze(amax, axis=axis)
    return out


def project_nonincreasing(v: np.ndarray, upper: float = 1.0, lower: float = 0.0) -> np.ndarray:
    """Euclidean projection onto {upper >= v[0] >= v[1] >= ... >= lower}.

    Pool-adjacent-violators on the reversed (nondecreasing) sequence, then a
    clip to the box.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.size
    if n == 0:
        return v.copy()
    # PAVA for a nonincreasing fit: pool adjacent blocks whose means increase.
    means = list(v)
    counts = [1] * n
    i = 0
    out_means: list[float] = []
    out_counts: list[int] = []
    for m, c in zip(means, counts):
        out_means.append(m)
        out_counts.append(c)
        while len(out_means) > 1 and out_means[-2] < out_means[-1]:
            m2, c2 = out_means.pop(), out_counts.pop()
            m1, c1 = out_means.pop(), out_counts.pop()
            out_means.append((m1 * c1 + m2 * c2) / (c1 + c2))
            out_counts.append(c1 + c2)
        i += 1
    fitted = np.concatenate([np.full(c, m) for m, c in zip(out_means, out_counts)])
    return np.clip(fitted, lower, upper)
