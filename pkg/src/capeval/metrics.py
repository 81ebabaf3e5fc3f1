"""CLIPScore, RefCLIPScore, and corpus-level aggregates.

CLIPScore(c, v) = w * max(cos(c, v), 0) with rescale parameter w = 2.5.
RefCLIPScore is the harmonic mean of CLIPScore and the clamped maximal
reference cosine max(max_r cos(c, r), 0).  The harmonic mean deliberately
mixes a [0, w]-scaled score with a raw cosine in [0, 1]; the reference term is
not rescaled.  H-Mean(0, x) is defined as 0 (limit value).

All reductions accumulate in float64 over the float32 stored vectors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from capeval.datasets import RatedPairRecord
from capeval.errors import DataError, UsageError
from capeval.store import EmbeddingStore


@dataclass(frozen=True)
class ClipScoreConfig:
    """Holds the positive rescale parameter w."""

    w: float = 2.5

    def __post_init__(self) -> None:
        if not (self.w > 0):
            raise UsageError(f"rescale parameter w must be positive, got {self.w}")


@dataclass(frozen=True)
class ScoreRecord:
    instance_id: str
    language: str
    clipscore: float
    refclipscore: float | None = None


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DataError(f"dimension mismatch: {a.shape} vs {b.shape}")
    dot = float(np.dot(a.astype(np.float64), b.astype(np.float64)))
    # unit-norm inputs guarantee |cos| <= 1 up to rounding
    return min(1.0, max(-1.0, dot))


def clip_score(c: np.ndarray, v: np.ndarray, cfg: ClipScoreConfig) -> float:
    """w * max(cos(c, v), 0) for unit-norm text c and image v."""
    return cfg.w * max(_cosine(c, v), 0.0)


def ref_clip_score(
    c: np.ndarray,
    refs: Sequence[np.ndarray],
    v: np.ndarray,
    cfg: ClipScoreConfig,
) -> float:
    """Harmonic mean of clip_score(c, v) and the clamped best reference cosine."""
    if len(refs) == 0:
        raise UsageError("ref_clip_score requires at least one reference vector")
    score = clip_score(c, v, cfg)
    best = max(_cosine(c, r) for r in refs)
    best = max(best, 0.0)
    if score == 0.0 or best == 0.0:
        return 0.0
    return 2.0 * score * best / (score + best)


def score_dataset(
    pairs: Sequence[RatedPairRecord],
    images: EmbeddingStore,
    texts: EmbeddingStore,
    cfg: ClipScoreConfig,
) -> list[ScoreRecord]:
    """Score every pair, in input order; RefCLIPScore only where references exist."""
    out: list[ScoreRecord] = []
    for pair in pairs:
        ctx = f"instance {pair.instance_id!r}"
        v = images.vector(pair.image_id, ctx)
        c = texts.vector(pair.candidate_id, ctx)
        ref = None
        if pair.reference_ids:
            refs = [texts.vector(r, ctx) for r in pair.reference_ids]
            ref = ref_clip_score(c, refs, v, cfg)
        out.append(
            ScoreRecord(pair.instance_id, pair.language, clip_score(c, v, cfg), ref)
        )
    return out


def corpus_mean(records: Sequence[ScoreRecord] | Sequence[float]) -> float:
    """Arithmetic mean of the CLIPScore column, accumulated in float64."""
    if len(records) == 0:
        raise DataError("corpus mean of an empty score list is undefined")
    values = [
        r.clipscore if isinstance(r, ScoreRecord) else float(r) for r in records
    ]
    return float(np.mean(np.asarray(values, dtype=np.float64)))


def write_scores_csv(records: Iterable[ScoreRecord], path: str | Path) -> None:
    """Emit `instance_id,language,clipscore,refclipscore` with 6-decimal floats."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["instance_id", "language", "clipscore", "refclipscore"])
        for rec in records:
            ref = "" if rec.refclipscore is None else f"{rec.refclipscore:.6f}"
            writer.writerow([rec.instance_id, rec.language, f"{rec.clipscore:.6f}", ref])


def read_scores_csv(path: str | Path) -> list[ScoreRecord]:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"file not found: {path}")
    records: list[ScoreRecord] = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["instance_id", "language", "clipscore", "refclipscore"]:
            raise DataError(f"{path}: unexpected score CSV header {header}")
        for row_no, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataError(f"{path}: row {row_no} has {len(row)} fields")
            try:
                clip = float(row[2])
                ref = float(row[3]) if row[3] != "" else None
            except ValueError as exc:
                raise DataError(f"{path}: row {row_no} has a non-numeric score") from exc
            if not math.isfinite(clip) or (ref is not None and not math.isfinite(ref)):
                raise DataError(f"{path}: row {row_no} has a non-finite score")
            records.append(ScoreRecord(row[0], row[1], clip, ref))
    return records
