"""Classification-style evaluations over stored embeddings.

Foil discrimination, entailment-ordering tasks (pairs with extreme labels,
all label-distinct pairs, full triples), two-image reasoning tasks, pairwise
preference accuracy, and the cross-language Pearson heatmap with
QE-percentile subsetting.

Comparisons are strict everywhere: a tie counts as incorrect, except in the
preference task where ties are broken by a seeded coin flip.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from capeval.datasets import (
    FoilRecord,
    NliLabel,
    NliRecord,
    PreferenceRecord,
    TwoImageRecord,
)
from capeval.errors import DataError, UsageError
from capeval.metrics import ClipScoreConfig, clip_score, ref_clip_score
from capeval.mtselect import qe_percentile_mask
from capeval.rng import derive_rng
from capeval.store import EmbeddingStore

HEATMAP_MODES = ("all", "bottom25", "top25")


@dataclass
class AccuracyResult:
    task_name: str
    language: str
    correct: int
    total: int
    skipped: int = 0
    breakdown: dict[str, "AccuracyResult"] = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        if self.total <= 0:
            raise DataError(f"{self.task_name}/{self.language}: no evaluated instances")
        return self.correct / self.total

    @property
    def macro_accuracy(self) -> float | None:
        if not self.breakdown:
            return None
        return float(np.mean([r.accuracy for r in self.breakdown.values()]))

    def to_json_dict(self) -> dict:
        payload = {
            "task": self.task_name,
            "language": self.language,
            "breakdown": {
                name: {"correct": r.correct, "total": r.total, "accuracy": r.accuracy}
                for name, r in sorted(self.breakdown.items())
            },
            "correct": self.correct,
            "total": self.total,
            "accuracy": self.accuracy,
            "skipped": self.skipped,
        }
        if self.breakdown:
            payload["macro_accuracy"] = self.macro_accuracy
        return payload


def _tally(result: AccuracyResult, correct: bool, stratum: str | None = None) -> None:
    result.total += 1
    result.correct += int(correct)
    if stratum is not None:
        sub = result.breakdown.get(stratum)
        if sub is None:
            sub = AccuracyResult(result.task_name, result.language, 0, 0)
            result.breakdown[stratum] = sub
        sub.total += 1
        sub.correct += int(correct)


def valse_accuracy(
    foils: Sequence[FoilRecord],
    images: EmbeddingStore,
    texts: EmbeddingStore,
    cfg: ClipScoreConfig,
) -> dict[str, AccuracyResult]:
    """Per language: instance correct iff the true caption outscores its foil."""
    if not foils:
        raise DataError("empty task: no foil records")
    results: dict[str, AccuracyResult] = {}
    for rec in foils:
        v = images.vector(rec.image_id, f"foil for caption {rec.caption_id!r}")
        true_score = clip_score(texts.vector(rec.caption_id), v, cfg)
        foil_score = clip_score(texts.vector(rec.foil_id), v, cfg)
        result = results.setdefault(
            rec.language, AccuracyResult("valse", rec.language, 0, 0)
        )
        _tally(result, true_score > foil_score, rec.phenomenon)
    return results


def _nli_scores(
    records: Sequence[NliRecord],
    images: EmbeddingStore,
    texts: EmbeddingStore,
    cfg: ClipScoreConfig,
) -> list[float]:
    return [
        clip_score(
            texts.vector(rec.caption_id, f"caption on image {rec.image_id!r}"),
            images.vector(rec.image_id),
            cfg,
        )
        for rec in records
    ]


def _by_language_image(
    records: Sequence[NliRecord],
) -> dict[str, dict[str, list[int]]]:
    grouped: dict[str, dict[str, list[int]]] = {}
    for idx, rec in enumerate(records):
        grouped.setdefault(rec.language, {}).setdefault(rec.image_id, []).append(idx)
    return grouped


def xvnli_task1(
    records: Sequence[NliRecord],
    images: EmbeddingStore,
    texts: EmbeddingStore,
    cfg: ClipScoreConfig,
) -> dict[str, AccuracyResult]:
    """Extreme labels only: every (contradiction, entailment) pair on one image
    is correct iff the entailment caption scores strictly higher."""
    scores = _nli_scores(records, images, texts, cfg)
    results: dict[str, AccuracyResult] = {}
    for language, by_image in _by_language_image(records).items():
        result = AccuracyResult("xvnli1", language, 0, 0)
        for members in by_image.values():
            lows = [i for i in members if records[i].label is NliLabel.CONTRADICTION]
            highs = [i for i in members if records[i].label is NliLabel.ENTAILMENT]
            for lo, hi in itertools.product(lows, highs):
                _tally(result, scores[hi] > scores[lo])
        if result.total:
            results[language] = result
    if not results:
        raise DataError("empty task: no contradiction/entailment pairs share an image")
    return results


def xvnli_task2(
    records: Sequence[NliRecord],
    images: EmbeddingStore,
    texts: EmbeddingStore,
    cfg: ClipScoreConfig,
) -> dict[str, AccuracyResult]:
    """All label-distinct pairs on one image; the score order must match the
    label order strictly.  Same-label pairs have no defined order and are
    excluded."""
    scores = _nli_scores(records, images, texts, cfg)
    results: dict[str, AccuracyResult] = {}
    for language, by_image in _by_language_image(records).items():
        result = AccuracyResult("xvnli2", language, 0, 0)
        for members in by_image.values():
            for a, b in itertools.combinations(members, 2):
                la, lb = records[a].label, records[b].label
                if la == lb:
                    continue
                want = la > lb
                got = scores[a] > scores[b] if want else scores[b] > scores[a]
                _tally(result, got)
        if result.total:
            results[language] = result
    if not results:
        raise DataError("empty task: no label-distinct pairs share an image")
    return results


def xvnli_task3(
    records: Sequence[NliRecord],
    images: EmbeddingStore,
    texts: EmbeddingStore,
    cfg: ClipScoreConfig,
) -> dict[str, AccuracyResult]:
    """Label-distinct triples on one image; correct only on a perfect match
    score(entailment) > score(neutral) > score(contradiction)."""
    scores = _nli_scores(records, images, texts, cfg)
    results: dict[str, AccuracyResult] = {}
    for language, by_image in _by_language_image(records).items():
        result = AccuracyResult("xvnli3", language, 0, 0)
        for members in by_image.values():
            buckets = {
                label: [i for i in members if records[i].label is label]
                for label in NliLabel
            }
            for con, neu, ent in itertools.product(
                buckets[NliLabel.CONTRADICTION],
                buckets[NliLabel.NEUTRAL],
                buckets[NliLabel.ENTAILMENT],
            ):
                _tally(result, scores[ent] > scores[neu] > scores[con])
        if result.total:
            results[language] = result
    if not results:
        raise DataError("empty task: no image carries all three labels")
    return results


def _two_image_groups(
    records: Sequence[TwoImageRecord],
) -> dict[str, dict[str, list[TwoImageRecord]]]:
    grouped: dict[str, dict[str, list[TwoImageRecord]]] = {}
    for rec in records:
        grouped.setdefault(rec.language, {}).setdefault(rec.group_id, []).append(rec)
    return grouped


def _instance_scores(
    rec: TwoImageRecord,
    images: EmbeddingStore,
    texts: EmbeddingStore,
    cfg: ClipScoreConfig,
) -> tuple[float, float]:
    c = texts.vector(rec.caption_id, f"caption of group {rec.group_id!r}")
    return (
        clip_score(c, images.vector(rec.image_left), cfg),
        clip_score(c, images.vector(rec.image_right), cfg),
    )


def marvl_task1(
    records: Sequence[TwoImageRecord],
    images: EmbeddingStore,
    texts: EmbeddingStore,
    cfg: ClipScoreConfig,
) -> dict[str, AccuracyResult]:
    """True-vs-false instance pairs sharing a caption: the best image of the
    true instance must outscore the worst image of the false instance."""
    if not records:
        raise DataError("empty task: no two-image records")
    results: dict[str, AccuracyResult] = {}
    for language, by_group in _two_image_groups(records).items():
        result = AccuracyResult("marvl1", language, 0, 0)
        for members in by_group.values():
            trues = [m for m in members if m.label]
            falses = [m for m in members if not m.label]
            if not trues or not falses or len({m.caption_id for m in members}) != 1:
                result.skipped += 1
                continue
            best_true = [max(_instance_scores(t, images, texts, cfg)) for t in trues]
            worst_false = [min(_instance_scores(f, images, texts, cfg)) for f in falses]
            for bt, wf in itertools.product(best_true, worst_false):
                _tally(result, bt > wf)
        if result.total or result.skipped:
            results[language] = result
    return results


def marvl_task2(
    records: Sequence[TwoImageRecord],
    images: EmbeddingStore,
    texts: EmbeddingStore,
    cfg: ClipScoreConfig,
) -> dict[str, AccuracyResult]:
    """Full groups of four (two true, two false): both true maxima must exceed
    both false minima.  Malformed groups are skipped and counted."""
    if not records:
        raise DataError("empty task: no two-image records")
    results: dict[str, AccuracyResult] = {}
    for language, by_group in _two_image_groups(records).items():
        result = AccuracyResult("marvl2", language, 0, 0)
        for members in by_group.values():
            trues = [m for m in members if m.label]
            falses = [m for m in members if not m.label]
            if (
                len(members) != 4
                or len(trues) != 2
                or len(falses) != 2
                or len({m.caption_id for m in members}) != 1
            ):
                result.skipped += 1
                continue
            true_maxima = [max(_instance_scores(t, images, texts, cfg)) for t in trues]
            false_minima = [min(_instance_scores(f, images, texts, cfg)) for f in falses]
            _tally(result, min(true_maxima) > max(false_minima))
        if result.total or result.skipped:
            results[language] = result
    return results


def pascal_pairwise(
    preferences: Sequence[PreferenceRecord],
    images: EmbeddingStore,
    texts: EmbeddingStore,
    cfg: ClipScoreConfig,
    seed: int = 0,
    metric: str = "clipscore",
) -> AccuracyResult:
    """Accuracy of assigning the higher score to the majority-preferred caption.

    Score ties are broken by a per-instance seeded coin flip; instances with
    tied votes carry no ground truth and are skipped.
    """
    if metric not in ("clipscore", "refclipscore"):
        raise UsageError(f"metric must be clipscore or refclipscore, got {metric!r}")
    if not preferences:
        raise DataError("empty task: no preference records")
    result = AccuracyResult("pascal", "en", 0, 0)
    for idx, rec in enumerate(preferences):
        if rec.votes_a == rec.votes_b:
            result.skipped += 1
            continue
        v = images.vector(rec.image_id, f"preference instance {idx}")
        preferred, other = (
            (rec.candidate_a, rec.candidate_b)
            if rec.votes_a > rec.votes_b
            else (rec.candidate_b, rec.candidate_a)
        )
        if metric == "refclipscore":
            if not rec.reference_ids:
                raise DataError(
                    f"preference instance {idx} has no references for refclipscore"
                )
            refs = [texts.vector(r) for r in rec.reference_ids]
            s_pref = ref_clip_score(texts.vector(preferred), refs, v, cfg)
            s_other = ref_clip_score(texts.vector(other), refs, v, cfg)
        else:
            s_pref = clip_score(texts.vector(preferred), v, cfg)
            s_other = clip_score(texts.vector(other), v, cfg)
        if s_pref == s_other:
            correct = bool(derive_rng(seed, "preference-tie", idx).integers(2))
        else:
            correct = s_pref > s_other
        _tally(result, correct, rec.category)
    if result.total == 0:
        raise DataError("empty task: every preference instance has tied votes")
    return result


@dataclass(frozen=True)
class HeatmapResult:
    languages: list[str]
    matrix: np.ndarray  # float64, NaN marks a missing entry

    def to_json_dict(self) -> dict:
        cells = [
            [None if math.isnan(v) else v for v in row] for row in self.matrix.tolist()
        ]
        return {"languages": self.languages, "matrix": cells}


def _pearson_or_nan(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        return math.nan
    return float(da @ db) / denom


def language_heatmap(
    score_tables: Mapping[str, np.ndarray],
    qe_tables: Mapping[str, np.ndarray] | None,
    mode: str = "all",
) -> HeatmapResult:
    """Pairwise Pearson correlation of per-language score vectors.

    In the percentile modes each cell is restricted to instances whose QE
    score is strictly below the 25th (bottom25) or strictly above the 75th
    (top25) percentile of the partner language's own QE distribution; when
    both languages have QE tables the two masks are intersected.  The pivot
    language (no QE table, e.g. the untranslated source) is subsetted by its
    partner's mask alone.  Cells with fewer than 3 instances, and cells whose
    restricted vectors are constant, are reported as missing (NaN); the
    diagonal is 1 by definition.
    """
    if mode not in HEATMAP_MODES:
        raise UsageError(f"heatmap mode must be one of {HEATMAP_MODES}")
    if not score_tables:
        raise DataError("heatmap needs at least one language")
    languages = list(score_tables)
    lengths = {lang: len(score_tables[lang]) for lang in languages}
    if len(set(lengths.values())) != 1:
        raise DataError(f"score vectors differ in length: {lengths}")
    n = lengths[languages[0]]

    masks: dict[str, np.ndarray] = {}
    if mode != "all":
        if qe_tables is None:
            raise UsageError(f"heatmap mode {mode!r} requires QE tables")
        direction = "below" if mode == "bottom25" else "above"
        for lang, qe in qe_tables.items():
            if lang not in score_tables:
                raise DataError(f"QE table for unknown language {lang!r}")
            if len(qe) != n:
                raise DataError(f"QE vector for {lang!r} has length {len(qe)}, expected {n}")
            masks[lang] = qe_percentile_mask(qe, 25.0, direction)

    size = len(languages)
    matrix = np.ones((size, size), dtype=np.float64)
    for i, j in itertools.combinations(range(size), 2):
        li, lj = languages[i], languages[j]
        mask = np.ones(n, dtype=bool)
        for lang in (li, lj):
            if lang in masks:
                mask &= masks[lang]
        xi = np.asarray(score_tables[li], dtype=np.float64)[mask]
        xj = np.asarray(score_tables[lj], dtype=np.float64)[mask]
        value = math.nan if xi.size < 3 else _pearson_or_nan(xi, xj)
        matrix[i, j] = matrix[j, i] = value
    return HeatmapResult(languages=languages, matrix=matrix)


def write_heatmap_csv(result: HeatmapResult, path) -> None:
    """CSV matrix with a language-tag header row and column; missing cells empty."""
    lines = ["," + ",".join(result.languages)]
    for lang, row in zip(result.languages, result.matrix):
        cells = ["" if math.isnan(v) else f"{v:.6f}" for v in row]
        lines.append(lang + "," + ",".join(cells))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
