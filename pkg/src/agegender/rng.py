"""Portable seeding.

Curation draws come from SplitMix64 (Steele, Lea & Flood 2014), a 64-bit
generator simple enough to port to any language bit-for-bit.  Numeric work
(weight init, dropout, audio synthesis) uses numpy's PCG64 seeded from
:func:`derive_seed`.

Subsystem seeds are the first 8 bytes (little-endian) of
``sha256(f"{seed}/{name}")``.
"""

import hashlib

import numpy as np

_MASK = (1 << 64) - 1


def derive_seed(seed, name):
    digest = hashlib.sha256(f"{int(seed)}/{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def numpy_rng(seed, name):
    return np.random.Generator(np.random.PCG64(derive_seed(seed, name)))


class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def below(self, n):
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def shuffle(self, items):
        """Fisher-Yates shuffle, returning a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.below(i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def sample(self, items, k):
        """First ``k`` items of a shuffle."""
        return self.shuffle(items)[:k]


def splitmix(seed, name):
    return SplitMix64(derive_seed(seed, name))
