"""Binary embedding stores.

File format ("CAPEVEC1"):
  bytes 0-7   magic ASCII ``CAPEVEC1``
  u32 LE      version (currently 1)
  u32 LE      dimension d
  u64 LE      record count
  per record: u32 LE id byte-length, id bytes (UTF-8), u8 modality
              (0 = image, 1 = text), d consecutive f32 LE components.

Vectors are L2-normalized at load time so that cosine similarity reduces to a
dot product; CLIPScore is unchanged by this because cosine is scale-invariant.
Zero-norm vectors are rejected (cosine is undefined on them).  Stores are
immutable after load and safe for concurrent readers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from capeval.errors import CorruptionError, DataError, FormatError, UsageError

MAGIC = b"CAPEVEC1"
VERSION = 1
_HEADER = struct.Struct("<8sIIQ")

# A vector whose f64 norm is already this close to 1 is accepted as unit
# without re-dividing, which makes normalization idempotent at f32 precision
# (one division leaves |norm - 1| < 1e-7 for any realistic dimension).
_UNIT_SKIP_TOL = 1e-6
# Contract bound on the norm of a loaded vector.
UNIT_NORM_TOL = 1e-5


class Modality(Enum):
    IMAGE = 0
    TEXT = 1


@dataclass(frozen=True)
class EmbeddingRecord:
    id: str
    vector: np.ndarray  # float32, unit norm, read-only
    modality: Modality


@dataclass
class EmbeddingStore:
    """Id-keyed collection of unit-norm float32 vectors of one dimension."""

    dimension: int
    records: dict[str, EmbeddingRecord] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[EmbeddingRecord]:
        return iter(self.records.values())

    def __contains__(self, record_id: str) -> bool:
        return record_id in self.records

    def add(self, record: EmbeddingRecord) -> None:
        if record.id in self.records:
            raise DataError(f"duplicate embedding id {record.id!r}")
        if record.vector.shape != (self.dimension,):
            raise DataError(
                f"record {record.id!r} has dimension {record.vector.shape[0]}, "
                f"store expects {self.dimension}"
            )
        self.records[record.id] = record

    def vector(self, record_id: str, context: str = "") -> np.ndarray:
        """Exact-match lookup; raises a DataError naming the missing id."""
        rec = self.records.get(record_id)
        if rec is None:
            where = f" ({context})" if context else ""
            raise DataError(f"id {record_id!r} not found in store{where}")
        return rec.vector

    @classmethod
    def from_records(
        cls, dimension: int, records: Iterable[EmbeddingRecord]
    ) -> "EmbeddingStore":
        store = cls(dimension)
        for rec in records:
            store.add(rec)
        return store


def normalize_vectors(matrix: np.ndarray, ids: Sequence[str]) -> np.ndarray:
    """L2-normalize rows, accumulating in float64 and returning float32.

    Rows already unit to within ``_UNIT_SKIP_TOL`` are passed through bitwise,
    which makes the operation idempotent.  Zero-norm rows raise a DataError
    naming the offending id.
    """
    wide = matrix.astype(np.float64, copy=False)
    norms = np.linalg.norm(wide, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataError(f"zero-norm vector for id {ids[int(zero[0])]!r}")
    out = np.asarray(matrix, dtype=np.float32).copy()
    needs = np.abs(norms - 1.0) > _UNIT_SKIP_TOL
    if np.any(needs):
        out[needs] = (wide[needs] / norms[needs, None]).astype(np.float32)
    return out


def store_from_matrix(
    ids: Sequence[str],
    matrix: np.ndarray,
    modality: Modality,
) -> EmbeddingStore:
    """Build a normalized store from an (n, d) array; a fast bulk constructor."""
    if len(ids) != matrix.shape[0]:
        raise UsageError("ids and matrix row count differ")
    if matrix.ndim != 2 or matrix.shape[1] == 0:
        raise UsageError("matrix must be (n, d) with d > 0")
    normalized = normalize_vectors(matrix, ids)
    store = EmbeddingStore(int(matrix.shape[1]))
    for i, record_id in enumerate(ids):
        vec = normalized[i]
        vec.setflags(write=False)
        store.add(EmbeddingRecord(record_id, vec, modality))
    return store


def load_store(path: str | Path) -> EmbeddingStore:
    """Read a CAPEVEC1 file, normalizing every vector.

    Raises FormatError on bad magic/version, CorruptionError when the header
    disagrees with the body, DataError on zero-norm vectors or duplicate ids.
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: too short for a CAPEVEC1 header")
    magic, version, dim, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dim == 0:
        raise CorruptionError(f"{path}: declared dimension is 0")

    ids: list[str] = []
    modalities: list[int] = []
    rows = np.empty((count, dim), dtype=np.float32)
    offset = _HEADER.size
    vec_bytes = 4 * dim
    for k in range(count):
        if offset + 4 > len(blob):
            raise CorruptionError(
                f"{path}: header promises {count} records, file ends at {k}"
            )
        (id_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        end = offset + id_len + 1 + vec_bytes
        if end > len(blob):
            raise CorruptionError(
                f"{path}: header promises {count} records, file ends at {k}"
            )
        try:
            record_id = blob[offset : offset + id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptionError(f"{path}: record {k} id is not UTF-8") from exc
        offset += id_len
        modality = blob[offset]
        if modality not in (0, 1):
            raise CorruptionError(
                f"{path}: record {record_id!r} has modality byte {modality}"
            )
        offset += 1
        rows[k] = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
        ids.append(record_id)
        modalities.append(modality)
    if offset != len(blob):
        raise CorruptionError(
            f"{path}: {len(blob) - offset} trailing bytes after {count} records"
        )

    normalized = normalize_vectors(rows, ids)
    store = EmbeddingStore(int(dim))
    for record_id, modality, vec in zip(ids, modalities, normalized):
        vec = vec.copy()
        vec.setflags(write=False)
        store.add(EmbeddingRecord(record_id, vec, Modality(modality)))
    return store


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write a store in CAPEVEC1 format; load_store(save_store(s)) == s."""
    if len(store) == 0:
        raise UsageError("refusing to save an empty store")
    path = Path(path)
    parts: list[bytes] = [
        _HEADER.pack(MAGIC, VERSION, store.dimension, len(store))
    ]
    for rec in store:
        id_bytes = rec.id.encode("utf-8")
        parts.append(struct.pack("<I", len(id_bytes)))
        parts.append(id_bytes)
        parts.append(struct.pack("<B", rec.modality.value))
        parts.append(np.asarray(rec.vector, dtype="<f4").tobytes())
    try:
        path.write_bytes(b"".join(parts))
    except OSError as exc:
        raise UsageError(f"cannot write store to {path}: {exc}") from exc
