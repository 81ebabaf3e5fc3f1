import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from capeval.store import EmbeddingRecord, EmbeddingStore, Modality, normalize_vectors


def build_store(vectors: dict[str, np.ndarray], modality: Modality) -> EmbeddingStore:
    """Normalized store from an id -> vector mapping."""
    ids = list(vectors)
    matrix = np.stack([np.asarray(vectors[i], dtype=np.float64) for i in ids])
    normalized = normalize_vectors(matrix, ids)
    store = EmbeddingStore(matrix.shape[1])
    for i, record_id in enumerate(ids):
        vec = normalized[i].copy()
        vec.setflags(write=False)
        store.add(EmbeddingRecord(record_id, vec, modality))
    return store


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def unit_rows(generator: np.random.Generator, n: int, d: int) -> np.ndarray:
    rows = generator.standard_normal((n, d))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)
