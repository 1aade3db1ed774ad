"""Seeded randomness with reproducible per-item child streams.

The whole pipeline draws from numpy's PCG64 generator.  Every dataset item,
distortion spec, and training run derives its own child generator from a
(seed, stream-id) pair via ``numpy.random.SeedSequence``, so regenerating a
dataset with the same seed reproduces every byte regardless of iteration
order or parallelism.
"""

from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_SEED = 42

__all__ = ["DEFAULT_SEED", "make_rng", "child_rng", "child_seed", "stable_hash64"]


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a bare 64-bit seed."""
    return np.random.default_rng(int(seed))


def child_seed(seed: int, *stream_ids: int) -> int:
    """Deterministic 64-bit child seed for (seed, stream ids)."""
    ss = np.random.SeedSequence([int(seed), *[int(s) & 0xFFFFFFFFFFFFFFFF for s in stream_ids]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def child_rng(seed: int, *stream_ids: int) -> np.random.Generator:
    """Independent child generator for one item of a seeded run."""
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), *[int(s) & 0xFFFFFFFFFFFFFFFF for s in stream_ids]])
    )


def stable_hash64(text: str, salt: str = "") -> int:
    """Stable (process-independent) 64-bit hash of a string.

    Used for split assignment and deterministic shuffles keyed by item ids;
    Python's builtin ``hash`` is salted per process and unusable here.
    """
    digest = hashlib.blake2b((salt + text).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
