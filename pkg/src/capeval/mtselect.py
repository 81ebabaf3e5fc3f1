"""Quality-aware selection among N-best machine-translation candidates.

Language checking and QE scoring happen upstream; this module only consumes
their verdicts (`lang_ok`, `qe_score`).  Per (source_id, target_language)
group: discard candidates failing the language check, then keep the candidate
with the highest QE score, breaking ties by lexicographically smallest
candidate id.  Groups with no surviving candidate are dropped and reported.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from capeval.datasets import MtCandidate
from capeval.errors import DataError, UsageError


@dataclass(frozen=True)
class DroppedGroup:
    source_id: str
    language: str
    n_candidates: int
    reason: str = "no candidate passed the language check"


@dataclass(frozen=True)
class SelectionReport:
    selected: dict[tuple[str, str], MtCandidate]
    dropped: list[DroppedGroup]


def select_best(candidates: Sequence[MtCandidate]) -> SelectionReport:
    """Filter by language check, then take the max-QE candidate per group."""
    if len(candidates) == 0:
        raise DataError("no translation candidates to select from")
    groups: dict[tuple[str, str], list[MtCandidate]] = {}
    for cand in candidates:
        if math.isnan(cand.qe_score):
            raise DataError(f"candidate {cand.candidate_id!r} has NaN qe_score")
        groups.setdefault((cand.source_id, cand.target_language), []).append(cand)

    selected: dict[tuple[str, str], MtCandidate] = {}
    dropped: list[DroppedGroup] = []
    for key, members in groups.items():
        survivors = [c for c in members if c.lang_ok]
        if not survivors:
            dropped.append(DroppedGroup(key[0], key[1], len(members)))
            continue
        best = min(survivors, key=lambda c: (-c.qe_score, c.candidate_id))
        selected[key] = best
    return SelectionReport(selected=selected, dropped=dropped)


def qe_percentile_mask(
    qe_scores: Sequence[float], p: float, mode: str
) -> np.ndarray:
    """Boolean mask of instances strictly below the p-th / above the (100-p)-th
    linear-interpolation percentile of their own QE distribution.

    Strict inequalities guarantee the below and above masks never overlap.
    """
    if mode not in ("below", "above"):
        raise UsageError(f"percentile mode must be 'below' or 'above', got {mode!r}")
    if not (0.0 < p < 100.0):
        raise UsageError(f"percentile must lie strictly between 0 and 100, got {p}")
    arr = np.asarray(qe_scores, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 4:
        raise DataError("percentile masks need at least 4 QE scores")
    if not np.all(np.isfinite(arr)):
        raise DataError("QE scores contain non-finite values")
    if mode == "below":
        return arr < np.percentile(arr, p, method="linear")
    return arr > np.percentile(arr, 100.0 - p, method="linear")


def write_selection_jsonl(
    report: SelectionReport, selected_path: str | Path, drops_path: str | Path
) -> None:
    """Selected translations plus the drop report, one JSON object per line."""
    with Path(selected_path).open("w", encoding="utf-8") as handle:
        for (source_id, language), cand in sorted(report.selected.items()):
            handle.write(
                json.dumps(
                    {
                        "source_id": source_id,
                        "language": language,
                        "candidate_id": cand.candidate_id,
                        "text": cand.text,
                        "qe_score": cand.qe_score,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    with Path(drops_path).open("w", encoding="utf-8") as handle:
        for drop in sorted(report.dropped, key=lambda d: (d.source_id, d.language)):
            handle.write(
                json.dumps(
                    {
                        "source_id": drop.source_id,
                        "language": drop.language,
                        "n_candidates": drop.n_candidates,
                        "reason": drop.reason,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_selected_qe(path: str | Path) -> dict[str, dict[str, float]]:
    """language -> {source_id -> qe_score} from a selected-translation JSONL."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"file not found: {path}")
    tables: dict[str, dict[str, float]] = {}
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                source = obj["source_id"]
                language = obj["language"]
                qe = float(obj["qe_score"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: line {line_no} is not a selection record") from exc
            tables.setdefault(language, {})[source] = qe
    return tables
