"""Dataset records and the newline-delimited JSON loader.

One schema per benchmark flavor; every line must carry the schema's required
fields (unknown fields are ignored), blank lines are skipped, and any other
malformed line is a hard error naming its 1-based line number.  Loading is
order-preserving: record k corresponds to the k-th non-blank line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Any, Callable

from capeval.errors import DataError, SchemaError, UsageError

SPLITS = ("train", "validation", "test")
PREFERENCE_CATEGORIES = ("HC", "HI", "HM", "MM")


class NliLabel(IntEnum):
    """Entailment labels, totally ordered by semantic agreement."""

    CONTRADICTION = 0
    NEUTRAL = 1
    ENTAILMENT = 2


@dataclass(frozen=True)
class RatedPairRecord:
    instance_id: str
    image_id: str
    candidate_id: str
    reference_ids: tuple[str, ...]
    rating: float
    language: str
    split: str


@dataclass(frozen=True)
class FoilRecord:
    image_id: str
    caption_id: str
    foil_id: str
    phenomenon: str
    language: str


@dataclass(frozen=True)
class NliRecord:
    image_id: str
    caption_id: str
    label: NliLabel
    language: str


@dataclass(frozen=True)
class TwoImageRecord:
    group_id: str
    caption_id: str
    image_left: str
    image_right: str
    label: bool
    language: str


@dataclass(frozen=True)
class PreferenceRecord:
    image_id: str
    candidate_a: str
    candidate_b: str
    category: str
    votes_a: int
    votes_b: int
    reference_ids: tuple[str, ...]


@dataclass(frozen=True)
class MtCandidate:
    source_id: str
    target_language: str
    candidate_id: str
    text: str
    lang_ok: bool
    qe_score: float


def _need(obj: dict, key: str, line_no: int) -> Any:
    if key not in obj:
        raise SchemaError(f"line {line_no}: missing required field {key!r}")
    return obj[key]


def _string(obj: dict, key: str, line_no: int) -> str:
    value = _need(obj, key, line_no)
    if not isinstance(value, str):
        raise SchemaError(f"line {line_no}: field {key!r} must be a string")
    return value


def _boolean(obj: dict, key: str, line_no: int) -> bool:
    value = _need(obj, key, line_no)
    if not isinstance(value, bool):
        raise SchemaError(f"line {line_no}: field {key!r} must be a boolean")
    return value


def _integer(obj: dict, key: str, line_no: int) -> int:
    value = _need(obj, key, line_no)
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"line {line_no}: field {key!r} must be an integer")
    return value


def _number(obj: dict, key: str, line_no: int) -> float:
    value = _need(obj, key, line_no)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"line {line_no}: field {key!r} must be a number")
    return float(value)


def _string_list(obj: dict, key: str, line_no: int) -> tuple[str, ...]:
    value = _need(obj, key, line_no)
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise SchemaError(f"line {line_no}: field {key!r} must be a list of strings")
    return tuple(value)


def _parse_rated_pair(obj: dict, line_no: int) -> RatedPairRecord:
    rating = _number(obj, "rating", line_no)
    if not math.isfinite(rating):
        raise DataError(f"line {line_no}: rating is not finite")
    split = _string(obj, "split", line_no)
    if split not in SPLITS:
        raise SchemaError(f"line {line_no}: split must be one of {SPLITS}")
    return RatedPairRecord(
        instance_id=_string(obj, "instance_id", line_no),
        image_id=_string(obj, "image_id", line_no),
        candidate_id=_string(obj, "candidate_id", line_no),
        reference_ids=_string_list(obj, "reference_ids", line_no),
        rating=rating,
        language=_string(obj, "language", line_no),
        split=split,
    )


def _parse_foil(obj: dict, line_no: int) -> FoilRecord:
    return FoilRecord(
        image_id=_string(obj, "image_id", line_no),
        caption_id=_string(obj, "caption_id", line_no),
        foil_id=_string(obj, "foil_id", line_no),
        phenomenon=_string(obj, "phenomenon", line_no),
        language=_string(obj, "language", line_no),
    )


def _parse_nli(obj: dict, line_no: int) -> NliRecord:
    label = _string(obj, "label", line_no)
    try:
        parsed = NliLabel[label.upper()]
    except KeyError:
        raise SchemaError(
            f"line {line_no}: label must be contradiction|neutral|entailment"
        ) from None
    return NliRecord(
        image_id=_string(obj, "image_id", line_no),
        caption_id=_string(obj, "caption_id", line_no),
        label=parsed,
        language=_string(obj, "language", line_no),
    )


def _parse_two_image(obj: dict, line_no: int) -> TwoImageRecord:
    return TwoImageRecord(
        group_id=_string(obj, "group_id", line_no),
        caption_id=_string(obj, "caption_id", line_no),
        image_left=_string(obj, "image_left", line_no),
        image_right=_string(obj, "image_right", line_no),
        label=_boolean(obj, "label", line_no),
        language=_string(obj, "language", line_no),
    )


def _parse_preference(obj: dict, line_no: int) -> PreferenceRecord:
    category = _string(obj, "category", line_no)
    if category not in PREFERENCE_CATEGORIES:
        raise SchemaError(
            f"line {line_no}: category must be one of {PREFERENCE_CATEGORIES}"
        )
    return PreferenceRecord(
        image_id=_string(obj, "image_id", line_no),
        candidate_a=_string(obj, "candidate_a", line_no),
        candidate_b=_string(obj, "candidate_b", line_no),
        category=category,
        votes_a=_integer(obj, "votes_a", line_no),
        votes_b=_integer(obj, "votes_b", line_no),
        reference_ids=_string_list(obj, "reference_ids", line_no),
    )


def _parse_mt_candidate(obj: dict, line_no: int) -> MtCandidate:
    qe = _number(obj, "qe_score", line_no)
    if not math.isfinite(qe):
        raise DataError(f"line {line_no}: qe_score is not finite")
    return MtCandidate(
        source_id=_string(obj, "source_id", line_no),
        target_language=_string(obj, "target_language", line_no),
        candidate_id=_string(obj, "candidate_id", line_no),
        text=_string(obj, "text", line_no),
        lang_ok=_boolean(obj, "lang_ok", line_no),
        qe_score=qe,
    )


_PARSERS: dict[str, Callable[[dict, int], Any]] = {
    "rated-pair": _parse_rated_pair,
    "foil": _parse_foil,
    "nli": _parse_nli,
    "two-image": _parse_two_image,
    "preference": _parse_preference,
    "mt-candidate": _parse_mt_candidate,
}

SCHEMAS = tuple(_PARSERS)


def load_jsonl_dataset(path: str | Path, schema: str) -> list[Any]:
    """Parse a JSONL file under the named schema.

    Blank lines are skipped; any other malformed line raises with its line
    number, keeping benchmark numbers trustworthy.
    """
    if schema not in _PARSERS:
        raise UsageError(f"unknown dataset schema {schema!r}; expected one of {SCHEMAS}")
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"file not found: {path}")
    parser = _PARSERS[schema]
    records = []
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise SchemaError(f"line {line_no}: expected a JSON object")
            records.append(parser(obj, line_no))
    return records
