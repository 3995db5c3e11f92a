"""Deterministic seed derivation.

All randomness in the package flows through ``numpy.random.default_rng``
seeded by a ``SeedSequence``. Child streams are derived from a master seed
plus a list of integer/string keys, so any component of an experiment can
be recomputed in isolation (and in any order) without perturbing the rest.
"""

from __future__ import annotations

import hashlib

import numpy as np

SeedLike = "int | np.random.SeedSequence"


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big")
    if isinstance(key, (float, np.floating)):
        # hash the exact bit pattern, not a decimal rendering
        return int(np.float64(key).view(np.uint64))
    raise TypeError(f"unsupported seed key type: {type(key).__name__}")


def child_seed(seed, *keys) -> np.random.SeedSequence:
    """Derive a child SeedSequence from ``seed`` and hashable keys.

    ``seed`` may be an int or a SeedSequence produced by this function;
    the derivation is stable across processes and platforms.
    """
    if isinstance(seed, np.random.SeedSequence):
        base = list(seed.entropy) if isinstance(seed.entropy, (list, tuple)) else [seed.entropy]
    else:
        base = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    return np.random.SeedSequence(base + [_key_to_int(k) for k in keys])


def rng_for(seed, *keys) -> np.random.Generator:
    """Generator for the child stream identified by ``keys``."""
    if keys:
        return np.random.default_rng(child_seed(seed, *keys))
    return np.random.default_rng(seed)
