"""SplitMix64, the fixed PRNG behind every seeded decision in a run.

The algorithm is Steele, Lea and Flood's SplitMix64 with the standard
golden-ratio increment, so a golden run can be reproduced by any
implementation of that generator. ``split`` derives an independent child
stream seeded from the parent's next output.
"""

from __future__ import annotations

import secrets

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    @classmethod
    def from_os_entropy(cls) -> SplitMix64:
        return cls(secrets.randbits(64))

    def next_u64(self) -> int:
        self.state = z = (self.state + GOLDEN_GAMMA) & MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection (no modulo bias)."""
        if not 0 < n <= 1 << 64:
            raise ValueError(f"bound out of range: {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def random_bytes(self, count: int) -> bytes:
        out = bytearray()
        while len(out) < count:
            out += self.next_u64().to_bytes(8, "big")
        return bytes(out[:count])

    def split(self) -> SplitMix64:
        return SplitMix64(self.next_u64())

    def sample(self, population: list, count: int) -> list:
        """First ``count`` slots of a Fisher-Yates shuffle of ``population``."""
        if count > len(population):
            raise ValueError(f"cannot sample {count} from {len(population)}")
        pool = list(population)
        for i in range(count):
            j = i + self.randbelow(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:count]
