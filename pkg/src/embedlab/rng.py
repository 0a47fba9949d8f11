"""Deterministic random-stream derivation.

Every stochastic operation in embedlab takes an explicit `numpy.random.Generator`.
Parallel trials never share a generator: each derives its own substream from
(seed, key...) so that results are independent of execution order and worker
count.  String keys are hashed with crc32, which is stable across processes
(unlike the builtin `hash`).
"""

from __future__ import annotations

import zlib

import numpy as np

_U32 = 2**32


def _as_key_words(key: int | str) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError("substream keys must be nonnegative")
    return int(key)


def stream_from(seed: int) -> np.random.Generator:
    """Root generator for a 64-bit unsigned seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def substream(seed: int, *keys: int | str) -> np.random.Generator:
    """Generator for the substream identified by (seed, keys...).

    Keys wider than 32 bits are split into two words so that distinct
    64-bit trial indices map to distinct spawn keys.
    """
    words: list[int] = []
    for key in keys:
        k = _as_key_words(key)
        words.append(k % _U32)
        if k >= _U32:
            words.append(k // _U32)
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(words))
    return np.random.default_rng(seq)


def derive_seed(stream: np.random.Generator) -> int:
    """Draw a fresh 63-bit seed from a stream (for recording provenance)."""
    return int(stream.integers(0, 2**63, dtype=np.int64))


def fork(stream: np.random.Generator) -> np.random.Generator:
    """Split an independent child generator off `stream`.

    Advances the parent exactly once, so a sequence of forks taken in a fixed
    order is reproducible; the children may then be consumed in any order
    (e.g. by parallel workers) without perturbing each other.
    """
    return np.random.default_rng(np.random.SeedSequence(derive_seed(stream)))
