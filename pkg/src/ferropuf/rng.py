"""Deterministic random-stream derivation.

Every stochastic component receives its own ``numpy.random.Generator``
derived from a single 64-bit root seed and a path of keys, e.g.
``derive_rng(seed, "attack", "arbiter", k, size, trial)``.  Keys are hashed
(BLAKE2b, 64-bit digest) into a ``SeedSequence`` spawn key, so a stream only
depends on the root seed and its own key path, never on the order in which
streams are requested.  This is what keeps parallel runs reproducible.
"""
from __future__ import annotations

import hashlib

import numpy as np

MAX_SEED = 2**64 - 1


def _key_to_int(key) -> int:
    digest = hashlib.blake2b(repr(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def seed_sequence(root_seed: int, *keys) -> np.random.SeedSequence:
    if not 0 <= int(root_seed) <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {root_seed}")
    return np.random.SeedSequence(int(root_seed), spawn_key=tuple(_key_to_int(k) for k in keys))


def derive_rng(root_seed: int, *keys) -> np.random.Generator:
    """Return an independent PCG64 generator for ``(root_seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(root_seed, *keys)))


def derive_seed(root_seed: int, *keys) -> int:
    """Derive a plain 64-bit child seed (for file headers and sub-runs)."""
    return int(seed_sequence(root_seed, *keys).generate_state(1, dtype=np.uint64)[0])
