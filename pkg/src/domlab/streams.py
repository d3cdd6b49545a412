"""Deterministic randomness for the dynamics modules.

An UpdateStream maps (vertex, step) to a pair of uniforms (U, T) through a
counter-based keyed hash.  Nothing is stored: re-querying the same triple
(seed, vertex, step) always reproduces the same pair, which is what lets
coupling-from-the-past extend its backward horizon while reusing all
previously revealed randomness bit for bit.
"""

from __future__ import annotations

import hashlib
import struct

_TWO64 = float(2**64)


class UpdateStream:
    """Counter-based source of (U, T) uniform pairs in the open interval (0,1)."""

    __slots__ = ("seed",)

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def pair(self, vertex: int, step: int) -> tuple[float, float]:
        """The (U, T) pair attached to an update of ``vertex`` at backward
        step ``step``; step 1 is the most recent sweep."""
        digest = hashlib.blake2b(
            struct.pack("<Qqq", self.seed, vertex, step), digest_size=16
        ).digest()
        a = int.from_bytes(digest[:8], "little")
        b = int.from_bytes(digest[8:], "little")
        return (a + 0.5) / _TWO64, (b + 0.5) / _TWO64

    def uniform(self, vertex: int, step: int) -> float:
        return self.pair(vertex, step)[0]

    def derive(self, tag: str) -> "UpdateStream":
        """Independent substream keyed by a label (auxiliary randomness)."""
        digest = hashlib.blake2b(
            struct.pack("<Q", self.seed) + tag.encode(), digest_size=8
        ).digest()
        return UpdateStream(int.from_bytes(digest, "little"))
