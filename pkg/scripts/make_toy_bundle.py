#!/usr/bin/env python3
"""Regenerate the checked-in toy bundle under data/toy/.

12 images, 40 captions (12 instances x 3 languages + 4 references), d = 16.
Candidate geometry is controlled so ratings are a quantized monotone function
of the image-caption cosine, ties included, and every benchmark file resolves
against the two stores.  Deterministic: rerunning reproduces identical bytes.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from capeval.store import Modality, save_store, store_from_matrix

SEED = 20240601
D = 16
N_INSTANCES = 12
LANGUAGES = ("en", "de", "fr")
OUT = Path(__file__).resolve().parent.parent / "data" / "toy"


def unit(v):
    return v / np.linalg.norm(v)


def at_cosine(rng, v, target):
    p = rng.standard_normal(v.shape)
    u = p - (p @ v) * v
    u = unit(u)
    return target * v + math.sqrt(max(0.0, 1 - target * target)) * u


def main() -> None:
    rng = np.random.Generator(np.random.Philox(key=SEED))
    OUT.mkdir(parents=True, exist_ok=True)

    image_ids = [f"img{i:02d}" for i in range(N_INSTANCES)]
    images = np.stack([unit(rng.standard_normal(D)) for _ in image_ids])

    # base quality per instance; shared across languages so ratings transfer
    base_cos = np.linspace(0.15, 0.9, N_INSTANCES)
    ratings = np.clip(np.round(1 + 3.2 * base_cos + rng.normal(0, 0.15, N_INSTANCES)), 1, 4)

    text_ids: list[str] = []
    text_rows: list[np.ndarray] = []
    for lang_k, lang in enumerate(LANGUAGES):
        for i in range(N_INSTANCES):
            wobble = float(rng.normal(0, 0.03))
            cos = float(np.clip(base_cos[i] + 0.02 * lang_k + wobble, 0.05, 0.97))
            text_ids.append(f"cap-{i:02d}-{lang}")
            text_rows.append(at_cosine(rng, images[i], cos))
    for i in range(4):
        text_ids.append(f"ref{i:02d}")
        text_rows.append(at_cosine(rng, images[i], 0.85))

    save_store(
        store_from_matrix(image_ids, images, Modality.IMAGE), OUT / "images.capevec"
    )
    save_store(
        store_from_matrix(text_ids, np.stack(text_rows), Modality.TEXT),
        OUT / "texts.capevec",
    )

    def dump(name, rows):
        (OUT / name).write_text(
            "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), encoding="utf-8"
        )

    pairs = []
    for lang in LANGUAGES:
        for i in range(N_INSTANCES):
            pairs.append(
                {
                    "instance_id": f"inst{i:02d}",
                    "image_id": image_ids[i],
                    "candidate_id": f"cap-{i:02d}-{lang}",
                    "reference_ids": [f"ref{i:02d}"] if i < 4 else [],
                    "rating": float(ratings[i]),
                    "language": lang,
                    "split": "test",
                }
            )
    dump("pairs.jsonl", pairs)

    phenomena = ("existence", "counting", "spatial", "actions")
    foils = []
    for lang in LANGUAGES:
        for k in range(8):
            i = k
            j = (k + 5) % N_INSTANCES
            foils.append(
                {
                    "image_id": image_ids[i],
                    "caption_id": f"cap-{i:02d}-{lang}",
                    "foil_id": f"cap-{j:02d}-{lang}",
                    "phenomenon": phenomena[k % len(phenomena)],
                    "language": lang,
                }
            )
    dump("foils.jsonl", foils)

    nli = []
    for lang in LANGUAGES:
        for i in range(N_INSTANCES):
            nli.append(
                {
                    "image_id": image_ids[i],
                    "caption_id": f"cap-{i:02d}-{lang}",
                    "label": "entailment",
                    "language": lang,
                }
            )
            nli.append(
                {
                    "image_id": image_ids[i],
                    "caption_id": f"cap-{(i + 1) % N_INSTANCES:02d}-{lang}",
                    "label": "neutral",
                    "language": lang,
                }
            )
            nli.append(
                {
                    "image_id": image_ids[i],
                    "caption_id": f"cap-{(i + 6) % N_INSTANCES:02d}-{lang}",
                    "label": "contradiction",
                    "language": lang,
                }
            )
    dump("nli.jsonl", nli)

    marvl = []
    for lang in LANGUAGES:
        for g in range(3):
            anchor = 4 * g
            cap = f"cap-{anchor:02d}-{lang}"
            others = [(anchor + 2) % N_INSTANCES, (anchor + 7) % N_INSTANCES]
            group = f"group-{lang}-{g}"
            marvl.append(
                {
                    "group_id": group, "caption_id": cap,
                    "image_left": image_ids[anchor],
                    "image_right": image_ids[others[0]],
                    "label": True, "language": lang,
                }
            )
            marvl.append(
                {
                    "group_id": group, "caption_id": cap,
                    "image_left": image_ids[others[1]],
                    "image_right": image_ids[anchor],
                    "label": True, "language": lang,
                }
            )
            for k in range(2):
                marvl.append(
                    {
                        "group_id": group, "caption_id": cap,
                        "image_left": image_ids[(anchor + 3 + k) % N_INSTANCES],
                        "image_right": image_ids[(anchor + 8 + k) % N_INSTANCES],
                        "label": False, "language": lang,
                    }
                )
    dump("marvl.jsonl", marvl)

    categories = ("HC", "HI", "HM", "MM")
    prefs = []
    for k in range(8):
        i = k
        j = (k + 4) % N_INSTANCES
        a_wins = k % 3 != 0
        prefs.append(
            {
                "image_id": image_ids[i],
                "candidate_a": f"cap-{i:02d}-en",
                "candidate_b": f"cap-{j:02d}-en",
                "category": categories[k % 4],
                "votes_a": 31 if a_wins else 17,
                "votes_b": 17 if a_wins else 31,
                "reference_ids": [f"ref{i % 4:02d}"],
            }
        )
    dump("prefs.jsonl", prefs)

    mt = []
    for lang in ("de", "fr"):
        for i in range(N_INSTANCES):
            qes = rng.uniform(0.55, 0.95, 3)
            oks = [True, bool(rng.integers(0, 2)), bool(rng.integers(0, 2))]
            for k in range(3):
                mt.append(
                    {
                        "source_id": f"inst{i:02d}",
                        "target_language": lang,
                        "candidate_id": f"mt-{i:02d}-{lang}-{k}",
                        "text": f"toy translation {i:02d}/{lang} variant {k}",
                        "lang_ok": oks[k],
                        "qe_score": round(float(qes[k]), 6),
                    }
                )
    dump("mt.jsonl", mt)
    print(f"wrote toy bundle to {OUT}")


if __name__ == "__main__":
    main()
