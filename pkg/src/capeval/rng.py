"""Deterministic random-stream derivation.

All randomness in the package flows from one user-supplied seed.  Submodules
derive independent streams by hashing a textual label plus an index into a
128-bit Philox key, so results never depend on call order or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_rng(seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Return a generator keyed by (seed, label, index).

    Streams for distinct (label, index) pairs are independent; the same triple
    always yields the same stream.
    """
    digest = hashlib.sha256(f"{label}:{seed}:{index}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))
