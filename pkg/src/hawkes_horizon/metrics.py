"""Accuracy metrics: median absolute percentage error, Kendall tau-b, RMSE."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MapeResult:
    value: float
    n_used: int
    n_excluded: int


def mape_detail(predictions, truths) -> MapeResult:
    """MAPE over examples with positive truth; zero-truth examples are counted, not used."""
    p = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(truths, dtype=float).ravel()
    if p.shape != y.shape:
        raise ValueError("predictions and truths differ in length")
    keep = y > 0
    if not keep.any():
        return MapeResult(math.nan, 0, int(y.size))
    ape = np.abs(p[keep] - y[keep]) / y[keep]
    return MapeResult(float(np.median(ape)), int(keep.sum()), int((~keep).sum()))


def mape(predictions, truths) -> float:
    return mape_detail(predictions, truths).value


def rmse(predictions, truths) -> float:
    p = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(truths, dtype=float).ravel()
    if p.size == 0 or p.shape != y.shape:
        raise ValueError("need equal-length nonempty inputs")
    return math.sqrt(float(np.mean((p - y) ** 2)))


def _tie_pairs(sorted_vals: np.ndarray) -> int:
    """Number of tied pairs in a sorted array."""
    if sorted_vals.size < 2:
        return 0
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    runs = np.diff(np.r_[starts, sorted_vals.size])
    return int(np.sum(runs * (runs - 1) // 2))


def count_inversions(a) -> int:
    """Pairs ``i < j`` with ``a[i] > a[j]``, by bottom-up merge sort.

    Each level merges adjacent sorted runs with a stable sort (linear on two
    presorted runs) and counts cross-run inversions with one searchsorted.
    """
    a = np.asarray(a)
    n = a.size
    if n < 2:
        return 0
    # dense integer ranks so a block id can be folded into the key
    _, r = np.unique(a, return_inverse=True)
    r = r.astype(np.int64).ravel()
    M = n + 1
    idx = np.arange(n)
    inv = 0
    width = 1
    while width < n:
        block = idx // (2 * width)
        right = (idx // width) % 2 == 1
        keyed = block * M + r
        L = keyed[~right]
        R = keyed[right]
        end = np.searchsorted(L, (block[right] + 1) * M, side="left")
        inv += int(np.sum(end - np.searchsorted(L, R, side="right")))
        r = np.sort(keyed, kind="stable") - block * M
        width *= 2
    return inv


def rank_correlation(predictions, truths) -> float:
    """Kendall tau-b in O(n log n); NaN when either input is constant."""
    x = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(truths, dtype=float).ravel()
    n = x.size
    if n < 2 or y.size != n:
        raise ValueError("need two equal-length inputs with n >= 2")
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xs)
    # joint ties: equal (x, y) runs in the lexsorted order
    same = np.r_[True, (xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1])]
    starts = np.flatnonzero(same)
    runs = np.diff(np.r_[starts, n])
    n3 = int(np.sum(runs * (runs - 1) // 2))
    n2 = _tie_pairs(np.sort(ys))
    swaps = count_inversions(ys)
    denom = math.sqrt(float(n0 - n1) * float(n0 - n2))
    if denom == 0:
        return math.nan
    return (n0 - n1 - n2 + n3 - 2 * swaps) / denom


def kendall_tau_b_bruteforce(predictions, truths) -> float:
    """O(n^2) pair-counting reference."""
    x = np.asarray(predictions, dtype=float)
    y = np.asarray(truths, dtype=float)
    n = x.size
    conc = disc = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = np.sign(x[i] - x[j])
            dy = np.sign(y[i] - y[j])
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif dx == dy:
                conc += 1
            else:
                disc += 1
    denom = math.sqrt((conc + disc + tx) * (conc + disc + ty))
    return (conc - disc) / denom if denom else math.nan
