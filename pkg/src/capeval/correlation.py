"""Rank correlation with full tie accounting.

Definitions, for n observations (y_hat_i, y_i):

  rho    Pearson correlation of the two rank vectors, ties receiving average
         (fractional) ranks.
  tau_b  (n_c - n_d) / sqrt((n_0 - n_1)(n_0 - n_2)), where n_c / n_d count
         concordant / discordant pairs, n_0 = n(n-1)/2, and
         n_1 = sum_i t_i(t_i-1)/2, n_2 = sum_j u_j(u_j-1)/2 over tie groups of
         the scores (t_i) and of the ratings (u_j).
  tau_c  ((n_c - n_d) / n_0) * ((n-1)/n) * (m/(m-1)), where m is the number of
         values in the rating scale (defaults to the number of distinct
         ratings in the input; override it when the scale is known).

Discordant pairs are counted in O(n log n) with merge-sort inversion counting;
the brute-force O(n^2) pair enumerator lives in the test suite as an oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from capeval.errors import DataError, DegenerateInputError


@dataclass(frozen=True)
class CorrelationReport:
    rho: float
    tau_b: float
    tau_c: float
    n: int
    n_c: int
    n_d: int
    n_0: int
    n_1: int
    n_2: int
    m: int

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "rho": self.rho,
            "tau_b": self.tau_b,
            "tau_c": self.tau_c,
            "n_c": self.n_c,
            "n_d": self.n_d,
            "n_0": self.n_0,
            "n_1": self.n_1,
            "n_2": self.n_2,
            "m": self.m,
        }


def _as_array(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def _validate_pair(scores: Sequence[float], ratings: Sequence[float]):
    x = _as_array(scores, "scores")
    y = _as_array(ratings, "ratings")
    if x.shape[0] != y.shape[0]:
        raise DataError(f"length mismatch: {x.shape[0]} scores vs {y.shape[0]} ratings")
    if x.shape[0] < 2:
        raise DegenerateInputError("correlation needs at least 2 observations")
    return x, y


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing their average rank."""
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts
    # average of positions starts+1 .. ends
    avg = (starts + ends + 1) / 2.0
    return avg[inverse]


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        raise DegenerateInputError("correlation undefined for a constant input")
    return float(da @ db) / denom


def spearman(scores: Sequence[float], ratings: Sequence[float]) -> float:
    """Pearson correlation of the average-rank transforms."""
    x, y = _validate_pair(scores, ratings)
    return _pearson(average_ranks(x), average_ranks(y))


def _count_inversions(values: np.ndarray) -> int:
    """Pairs (i < j) with values[i] > values[j], by merge sort."""
    work = list(values)
    buffer = work.copy()
    total = 0
    width = 1
    n = len(work)
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if work[i] <= work[j]:
                    buffer[k] = work[i]
                    i += 1
                else:
                    buffer[k] = work[j]
                    j += 1
                    total += mid - i
                k += 1
            buffer[k:hi] = work[i:mid] if i < mid else work[j:hi]
        work, buffer = buffer, work
        width *= 2
    return total


def _tie_sum(counts: np.ndarray) -> int:
    return int(np.sum(counts * (counts - 1)) // 2)


@dataclass(frozen=True)
class PairCounts:
    n: int
    n_c: int
    n_d: int
    n_0: int
    n_1: int
    n_2: int


def pair_counts(scores: Sequence[float], ratings: Sequence[float]) -> PairCounts:
    """Classify all n(n-1)/2 index pairs into concordant/discordant/tied."""
    x, y = _validate_pair(scores, ratings)
    n = x.shape[0]
    n_0 = n * (n - 1) // 2
    n_1 = _tie_sum(np.unique(x, return_counts=True)[1])
    n_2 = _tie_sum(np.unique(y, return_counts=True)[1])
    joint = _tie_sum(np.unique(np.stack([x, y], axis=1), axis=0, return_counts=True)[1])
    # sort by (x asc, y asc): pairs tied in x contribute no inversion, so
    # inversions of the y sequence are exactly the discordant pairs
    order = np.lexsort((y, x))
    n_d = _count_inversions(y[order])
    n_c = n_0 - n_1 - n_2 + joint - n_d
    return PairCounts(n=n, n_c=n_c, n_d=n_d, n_0=n_0, n_1=n_1, n_2=n_2)


def _tau_b_from_counts(c: PairCounts) -> float:
    denom = (c.n_0 - c.n_1) * (c.n_0 - c.n_2)
    if denom <= 0:
        raise DegenerateInputError(
            "tau_b undefined: all values tied on at least one side"
        )
    return (c.n_c - c.n_d) / math.sqrt(denom)


def _tau_c_from_counts(c: PairCounts, m: int) -> float:
    if m < 2:
        raise DegenerateInputError(f"tau_c needs a rating scale with m >= 2, got m={m}")
    return ((c.n_c - c.n_d) / c.n_0) * ((c.n - 1) / c.n) * (m / (m - 1))


def kendall_tau_b(
    scores: Sequence[float], ratings: Sequence[float]
) -> tuple[float, PairCounts]:
    counts = pair_counts(scores, ratings)
    return _tau_b_from_counts(counts), counts


def kendall_tau_c(
    scores: Sequence[float], ratings: Sequence[float], m: int | None = None
) -> float:
    counts = pair_counts(scores, ratings)
    if m is None:
        m = int(np.unique(np.asarray(ratings, dtype=np.float64)).size)
    return _tau_c_from_counts(counts, m)


def correlate(
    scores: Sequence[float], ratings: Sequence[float], m: int | None = None
) -> CorrelationReport:
    """All three coefficients plus the pair/tie bookkeeping in one pass."""
    x, y = _validate_pair(scores, ratings)
    counts = pair_counts(x, y)
    if m is None:
        m = int(np.unique(y).size)
    return CorrelationReport(
        rho=_pearson(average_ranks(x), average_ranks(y)),
        tau_b=_tau_b_from_counts(counts),
        tau_c=_tau_c_from_counts(counts, m),
        n=counts.n,
        n_c=counts.n_c,
        n_d=counts.n_d,
        n_0=counts.n_0,
        n_1=counts.n_1,
        n_2=counts.n_2,
        m=m,
    )
