"""Seedable deterministic random generator used everywhere randomness is needed.

The generator is a plain splitmix64: state advances by the 64-bit golden
gamma and each output is the splitmix finalizer of the new state. It is
part of the file-format contract (README "Determinism" section) so that
generated worlds, random walks, and oracle noise can be reproduced
bit-for-bit by any implementation, independent of the host language's
stdlib RNG.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(value: int) -> int:
    """Splitmix64 finalizer: avalanche a 64-bit value."""
    z = value & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def fnv1a64(text: str) -> int:
    """FNV-1a hash of a string, used to derive per-label substreams."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


class SplitMix64:
    """Minimal splitmix64 stream. Not cryptographic; stable across platforms."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN_GAMMA) & _MASK64
        return mix64(self._state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n). Modulo reduction; bias is negligible
        for the small n used here and keeps the sequence trivially portable."""
        if n <= 0:
            raise ValueError(f"randrange needs n >= 1, got {n}")
        return self.next_u64() % n

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def choice(self, seq):
        if not seq:
            raise ValueError("choice over empty sequence")
        return seq[self.randrange(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]


def derive_stream(seed: int, label: str) -> SplitMix64:
    """Independent substream for (seed, label), e.g. one per episode id."""
    return SplitMix64(mix64((seed & _MASK64) ^ fnv1a64(label)))
