"""Counter-based seed derivation so every stage is reproducible in isolation."""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("seed keys must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode())


def derive_rng(root: int, *keys) -> np.random.Generator:
    """Generator keyed by (root, *keys); strings are hashed with CRC32."""
    return np.random.default_rng(np.random.SeedSequence([_key(root), *map(_key, keys)]))


def derive_seed(root: int, *keys) -> int:
    return int(np.random.SeedSequence([_key(root), *map(_key, keys)]).generate_state(1)[0])
