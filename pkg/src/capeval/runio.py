"""Run manifests and deterministic output writing.

Every service run emits a manifest recording the subcommand, input paths, the
exact config snapshot, the seed, the tool version, and a SHA-256 digest of
each emitted file.  Manifests contain no timestamps so reruns with identical
inputs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from capeval import __version__


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def dump_json(payload, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


@dataclass
class RunManifest:
    subcommand: str
    inputs: dict[str, str]
    config: dict
    seed: int | None = None
    version: str = __version__
    outputs: dict[str, str] = field(default_factory=dict)

    def record_output(self, path: str | Path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def write(self, path: str | Path) -> None:
        dump_json(
            {
                "subcommand": self.subcommand,
                "inputs": self.inputs,
                "config": self.config,
                "seed": self.seed,
                "version": self.version,
                "outputs": self.outputs,
            },
            path,
        )


def prepare_out_dir(out_dir: str | Path) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path
