"""Paired Wilcoxon signed-rank test and score summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels

EXACT_MAX_N = 20


@dataclass(frozen=True)
class WilcoxonResult:
    W: float
    p_two_sided: float
    w_plus: float
    w_minus: float
    n: int
    method: str


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    xs = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float], method: str = "auto") -> WilcoxonResult:
    """Two-sided signed-rank test on the paired differences ``a - b``.

    Zero differences are dropped and tied magnitudes get average ranks.
    ``method`` is "exact" (enumerate all sign assignments), "approx" (normal
    with tie and continuity correction) or "auto" (exact for n <= 20).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must be 1-D of equal length, got {a.shape} and {b.shape}")
    if len(a) < 1:
        raise ValueError("need at least one pair")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("paired samples must be finite")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0.0, 0.0, 0, "degenerate")
    ranks = average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "approx"
    if method == "exact":
        p = exact_p(ranks, w)
    elif method == "approx":
        p = approx_p(np.abs(d), ranks, w)
    else:
        raise ValueError(f"unknown method {method!r}")
    return WilcoxonResult(w, p, w_plus, w_minus, n, method)


def exact_p(ranks: np.ndarray, w: float) -> float:
    n = len(ranks)
    if n > 62:
        raise ValueError("exact enumeration limited to n <= 62")
    ranks2 = np.rint(2 * np.asarray(ranks)).astype(np.int64)
    count = _kernels.count_sign_assignments(ranks2, int(round(2 * w)))
    return min(1.0, count / float(2**n))


def approx_p(abs_d: np.ndarray, ranks: np.ndarray, w: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    _, ties = np.unique(abs_d, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(ties**3 - ties)) / 48.0
    if var <= 0:
        return 1.0
    z = min(0.0, (w - mean + 0.5) / math.sqrt(var))
    return min(1.0, math.erfc(-z / math.sqrt(2.0)))


def summarize(scores: Sequence[float]) -> tuple[float, float]:
    """(mean, sample standard deviation); the std of a single score is 0."""
    x = np.asarray(scores, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot summarize an empty list")
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1))
