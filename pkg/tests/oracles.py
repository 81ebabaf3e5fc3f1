"""Independent reference implementations used as test oracles.

Each oracle is deliberately written from the contract, not from the library
code: brute-force O(n^2) pair classification, exact-fraction rank Pearson,
extended-precision metric evaluation, sort-based percentiles, and a second
implementation of the bootstrap sampling recipe.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
from mpmath import mp, mpf


# --- Kendall / Spearman -------------------------------------------------


def brute_force_pair_counts(x, y):
    """Classify every index pair by explicit double loop."""
    n = len(x)
    n_c = n_d = n_1 = n_2 = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (x[i] > x[j]) - (x[i] < x[j])
            dy = (y[i] > y[j]) - (y[i] < y[j])
            if dx == 0:
                n_1 += 1
            if dy == 0:
                n_2 += 1
            if dx != 0 and dy != 0:
                if dx == dy:
                    n_c += 1
                else:
                    n_d += 1
    return {"n": n, "n_c": n_c, "n_d": n_d, "n_0": n * (n - 1) // 2, "n_1": n_1, "n_2": n_2}


def brute_force_tau_b(x, y):
    c = brute_force_pair_counts(x, y)
    return (c["n_c"] - c["n_d"]) / math.sqrt((c["n_0"] - c["n_1"]) * (c["n_0"] - c["n_2"]))


def brute_force_tau_c(x, y, m):
    c = brute_force_pair_counts(x, y)
    return ((c["n_c"] - c["n_d"]) / c["n_0"]) * ((c["n"] - 1) / c["n"]) * (m / (m - 1))


def vectorized_pair_counts(x, y):
    """Same classification via numpy broadcasting, for long inputs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    iu = np.triu_indices(n, 1)
    dx = np.sign(x[:, None] - x[None, :])[iu]
    dy = np.sign(y[:, None] - y[None, :])[iu]
    prod = dx * dy
    return {
        "n": n,
        "n_c": int(np.sum(prod > 0)),
        "n_d": int(np.sum(prod < 0)),
        "n_0": n * (n - 1) // 2,
        "n_1": int(np.sum(dx == 0)),
        "n_2": int(np.sum(dy == 0)),
    }


def fraction_average_ranks(values) -> list[Fraction]:
    """1-based average ranks computed with exact rational arithmetic."""
    n = len(values)
    order = sorted(range(n), key=lambda i: values[i])
    ranks: list[Fraction] = [Fraction(0)] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = Fraction(sum(range(i + 1, j + 2)), j - i + 1)
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def fraction_spearman(x, y) -> float:
    """Rank-then-Pearson with exact fractions up to the final square root."""
    rx = fraction_average_ranks(x)
    ry = fraction_average_ranks(y)
    n = len(rx)
    mx = sum(rx, Fraction(0)) / n
    my = sum(ry, Fraction(0)) / n
    a = [r - mx for r in rx]
    b = [r - my for r in ry]
    num = sum((ai * bi for ai, bi in zip(a, b)), Fraction(0))
    den = sum((ai * ai for ai in a), Fraction(0)) * sum((bi * bi for bi in b), Fraction(0))
    if den == 0:
        raise ZeroDivisionError("constant input")
    return float(num) / math.sqrt(float(den))


def pair_value_multisets(n: int, values=(1, 2, 3)):
    """Every multiset of (x_i, y_i) pairs over values x values, as two lists.

    Up to index permutation this covers every pair of length-n sequences over
    the alphabet; permutation invariance is a separately tested property.
    """
    symbols = list(itertools.product(values, repeat=2))
    for combo in itertools.combinations_with_replacement(symbols, n):
        yield [p[0] for p in combo], [p[1] for p in combo]


# --- Metrics ------------------------------------------------------------


def mp_clip_score(c, v, w) -> float:
    with mp.workdps(60):
        cos = mp.fsum(mpf(float(a)) * mpf(float(b)) for a, b in zip(c, v))
        return float(mpf(w) * max(cos, mpf(0)))


def mp_ref_clip_score(c, refs, v, w) -> float:
    with mp.workdps(60):
        cos = mp.fsum(mpf(float(a)) * mpf(float(b)) for a, b in zip(c, v))
        score = mpf(w) * max(cos, mpf(0))
        best = max(
            mp.fsum(mpf(float(a)) * mpf(float(b)) for a, b in zip(c, r)) for r in refs
        )
        best = max(best, mpf(0))
        if score == 0 or best == 0:
            return 0.0
        return float(2 * score * best / (score + best))


# --- Percentiles ---------------------------------------------------------


def percentile_linear(values, p: float) -> float:
    """Sort-based linear-interpolation percentile."""
    s = sorted(float(v) for v in values)
    h = (len(s) - 1) * p / 100.0
    lo = math.floor(h)
    frac = h - lo
    if lo + 1 >= len(s):
        return s[-1]
    return s[lo] + frac * (s[lo + 1] - s[lo])


# --- Bootstrap -----------------------------------------------------------


def bootstrap_oracle(data, statistic, iterations, fraction, seed, strata_key):
    """Second implementation of the documented sampling recipe."""
    if strata_key == "none":
        strata = {"all": list(range(len(data)))}
    else:
        attr = "rating" if strata_key == "rating_value" else "language"
        strata = {}
        for idx, record in enumerate(data):
            strata.setdefault(getattr(record, attr), []).append(idx)
    ordered = [np.asarray(strata[k], dtype=np.int64) for k in sorted(strata)]
    takes = [math.ceil(fraction * len(s)) for s in ordered]
    values = np.empty(iterations, dtype=np.float64)
    for i in range(iterations):
        rng = np.random.Generator(np.random.Philox(key=seed ^ i))
        picked = []
        for indices, take in zip(ordered, takes):
            picked.extend(rng.permutation(indices)[:take].tolist())
        subset = [data[j] for j in sorted(picked)]
        values[i] = statistic(subset)
    return float(np.mean(values)), float(np.std(values))
