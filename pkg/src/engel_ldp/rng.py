"""Counter-based random streams.

Each ``RngStream`` is a Philox-4x64 key ``(seed, stream_index)``; the counter
starts at zero, so a stream is a pure function of its two integers.  Replica
``k`` of an experiment uses ``stream.substream(k)``, and results depend only
on which substreams were consumed, never on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = ["RngStream", "splitmix64"]

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK)
        object.__setattr__(self, "stream_index", int(self.stream_index) & _MASK)

    def substream(self, k: int) -> "RngStream":
        """Independent child stream ``k`` (keyed by a mixed stream index)."""
        return RngStream(self.seed, splitmix64(self.stream_index ^ splitmix64(int(k) + 1)))

    def generator(self) -> np.random.Generator:
        """A fresh numpy ``Generator`` positioned at the start of this stream."""
        key = np.array([self.seed, self.stream_index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def bits(self) -> "BitSource":
        return BitSource(self.generator())


class BitSource:
    """Scalar draws with exact rational values, for the big-integer samplers."""

    def __init__(self, gen: np.random.Generator):
        self._bg = gen.bit_generator

    def raw64(self) -> int:
        return int(self._bg.random_raw())

    def randbits(self, k: int) -> int:
        out = 0
        got = 0
        while got < k:
            take = min(64, k - got)
            out = (out << take) | (self.raw64() >> (64 - take))
            got += take
        return out

    def uniform(self) -> float:
        """Uniform on (0, 1] with 53-bit resolution; the float is exactly (m+1)/2**53."""
        return ((self.raw64() >> 11) + 1) / 9007199254740992.0

    def uniform_exact(self, k: int = 128) -> Fraction:
        """Uniform on (0, 1] as the exact rational (m+1)/2**k."""
        return Fraction(self.randbits(k) + 1, 1 << k)
