"""Checkpoint files: network config + weights + BN running statistics.

Stored as a compressed npz with a format version; float64 arrays round-trip
bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from histocase.errors import MissingArtifact
from histocase.model.config import NetworkConfig
from histocase.model.network import Parameters

FORMAT_VERSION = 1


def save_checkpoint(params: Parameters, path: str | Path, meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"w:{k}": v for k, v in params.weights.items()}
    arrays.update({f"r:{k}": v for k, v in params.running.items()})
    header = {
        "format_version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "meta": meta or {},
    }
    np.savez_compressed(path, __header__=json.dumps(header), **arrays)


def load_checkpoint(path: str | Path) -> tuple[Parameters, dict]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"checkpoint {path} does not exist")
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["__header__"]))
        if header.get("format_version") != FORMAT_VERSION:
            raise MissingArtifact(
                f"checkpoint {path}: unsupported format version "
                f"{header.get('format_version')}"
            )
        weights = {}
        running = {}
        for key in data.files:
            if key.startswith("w:"):
                weights[key[2:]] = data[key]
            elif key.startswith("r:"):
                running[key[2:]] = data[key]
    config = NetworkConfig.from_dict(header["config"])
    return Parameters(config=config, weights=weights, running=running), header["meta"]
