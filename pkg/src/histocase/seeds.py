"""Deterministic seed derivation.

One master seed expands into named sub-seeds (split / casegen / init /
shuffle / ...) so each pipeline stage is independently reproducible.  The
scheme is a SHA-256 hash of ``"<master>/<name>/<name>/..."`` truncated to
63 bits, which is stable across platforms and Python versions.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *names: object) -> int:
    """Derive a sub-seed from a master seed and a path of names."""
    key = "/".join([str(int(master))] + [str(n) for n in names])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


def make_rng(seed: int, *names: object) -> np.random.Generator:
    """PCG64 generator for ``seed`` (optionally derived through ``names``).

    PCG64 is the named portable generator used everywhere in the package;
    its integer stream is stable, so equal seeds give equal draws on any
    platform.
    """
    if names:
        seed = derive_seed(seed, *names)
    return np.random.Generator(np.random.PCG64(seed))
