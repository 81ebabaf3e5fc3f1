"""Stratified bootstrap standard deviations for scalar statistics.

Sampling contract (what an independent reimplementation must follow):
  * strata are formed by `stratify` and iterated in ascending key order;
  * iteration i uses the generator Philox(key = seed XOR i);
  * each stratum contributes its first ceil(fraction * size) indices of
    `generator.permutation(stratum_indices)`;
  * the subset is the concatenation of those draws, sorted ascending, and the
    statistic is evaluated on the records at those indices;
  * the reported mean is the sample mean and the reported std the population
    standard deviation of the per-iteration statistic values, reduced in
    iteration order regardless of worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Sequence

import numpy as np

from capeval.errors import DataError, UsageError

STRATA_KEYS = ("rating_value", "language", "none")


@dataclass(frozen=True)
class BootstrapConfig:
    iterations: int = 1000
    fraction: float = 0.80
    seed: int = 0
    strata_key: str = "rating_value"

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise UsageError("bootstrap iterations must be >= 1")
        if not (0.0 < self.fraction <= 1.0):
            raise UsageError("bootstrap fraction must lie in (0, 1]")
        if self.strata_key not in STRATA_KEYS:
            raise UsageError(f"strata key must be one of {STRATA_KEYS}")


def stratify(data: Sequence[Any], key: str) -> dict[Hashable, list[int]]:
    """Partition record indices by stratum key; strata are disjoint and cover data."""
    if key not in STRATA_KEYS:
        raise UsageError(f"strata key must be one of {STRATA_KEYS}")
    if key == "none":
        return {"all": list(range(len(data)))}
    attr = "rating" if key == "rating_value" else "language"
    strata: dict[Hashable, list[int]] = {}
    for idx, record in enumerate(data):
        try:
            value = getattr(record, attr)
        except AttributeError as exc:
            raise DataError(f"record {idx} has no {attr!r} field to stratify on") from exc
        strata.setdefault(value, []).append(idx)
    return {k: strata[k] for k in sorted(strata)}


def bootstrap_std(
    data: Sequence[Any],
    statistic: Callable[[list[Any]], float],
    cfg: BootstrapConfig,
    jobs: int = 1,
) -> tuple[float, float]:
    """Mean and population std of the statistic over resampled subsets.

    Bit-reproducible for a fixed seed, independent of `jobs`.
    """
    if len(data) == 0:
        raise DataError("cannot bootstrap an empty dataset")
    strata = stratify(data, cfg.strata_key)
    plan = [
        (np.asarray(indices, dtype=np.int64), math.ceil(cfg.fraction * len(indices)))
        for indices in strata.values()
    ]

    def one_iteration(i: int) -> float:
        rng = np.random.Generator(np.random.Philox(key=cfg.seed ^ i))
        chosen = np.concatenate(
            [rng.permutation(indices)[:take] for indices, take in plan]
        )
        chosen.sort()
        subset = [data[int(k)] for k in chosen]
        try:
            return float(statistic(subset))
        except Exception as exc:
            raise DataError(f"statistic failed at bootstrap iteration {i}: {exc}") from exc

    values = np.empty(cfg.iterations, dtype=np.float64)
    if jobs <= 1:
        for i in range(cfg.iterations):
            values[i] = one_iteration(i)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for i, value in zip(range(cfg.iterations), pool.map(one_iteration, range(cfg.iterations))):
                values[i] = value
    return float(np.mean(values)), float(np.std(values))
