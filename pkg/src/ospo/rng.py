"""Counter-based seeded substreams.

Every random draw in the package goes through :func:`substream`, keyed by a
root seed plus a tuple of names (stage, sample id, candidate, ...). Two
substreams with different keys are statistically independent, and the value
of one never depends on how many draws another consumed, so running samples
in any order or in parallel cannot change results.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_words(names) -> list[int]:
    words: list[int] = []
    for name in names:
        digest = hashlib.blake2b(repr(name).encode("utf-8"), digest_size=8).digest()
        words.append(int.from_bytes(digest, "little") & 0xFFFFFFFF)
        words.append(int.from_bytes(digest[4:], "little") & 0xFFFFFFFF)
    return words


def substream(seed: int, *names) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(_key_words(names)))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *names) -> int:
    """63-bit integer seed for a named substream (fits a signed 64-bit field)."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(_key_words(names)))
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return ((int(hi) << 32) | int(lo)) & ((1 << 63) - 1)


def stable_hash(text: str, modulus: int) -> int:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % modulus
