"""Counter-based 64-bit random stream shared by every randomized component.

The generator is splitmix64.  One step of the stream, given the current
64-bit state ``s``:

    s  = (s + 0x9E3779B97F4A7C15) mod 2^64
    z  = s
    z ^= z >> 30;  z  = (z * 0xBF58476D1CE4E5B9) mod 2^64
    z ^= z >> 27;  z  = (z * 0x94D049BB133111EB) mod 2^64
    z ^= z >> 31
    output z, new state s

Bounded draws use ``z mod n`` (the modulo bias of ~n/2^64 is irrelevant at
our ranges).  Shuffles are Fisher-Yates from the top index down.  The numba
kernels reimplement exactly these steps on int64 bit patterns; the tests
cross-check both paths draw for draw.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """The splitmix64 output mix of a 64-bit value (also used for hashing)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def next_u64(state: int) -> tuple[int, int]:
    """Advance the stream once. Returns (value, new_state)."""
    state = (state + GAMMA) & MASK64
    return mix64(state), state


class SplitMix64:
    """Convenience stateful wrapper over the raw stream functions."""

    __slots__ = ("state", "count")

    def __init__(self, seed: int):
        self.state = seed & MASK64
        self.count = 0

    def u64(self) -> int:
        value, self.state = next_u64(self.state)
        self.count += 1
        return value

    def below(self, n: int) -> int:
        """Uniform draw in [0, n). n must be positive."""
        return self.u64() % n

    def uniform(self) -> float:
        """Float in [0, 1) using the top 53 bits."""
        return (self.u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, top index down, one draw per swap."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def fork(self) -> "SplitMix64":
        """Child stream seeded from one draw; decorrelated from the parent."""
        return SplitMix64(self.u64())
