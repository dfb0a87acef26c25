"""Deterministic counter-based random streams.

Each stream is keyed by (run seed, stream id) and its draws are a pure
function of (key, draw index): draw i is ``mix64(key + (i + 1) * GAMMA)``,
the SplitMix64 construction. Because the state is literally a draw counter,
the values one stream produces can never depend on wall clock, scheduling
order, or what any other stream has drawn.
"""

import math

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_SEED_SALT = 0x6A09E667F3BCC908


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a bijective avalanche mix on 64-bit words."""
    z &= MASK64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def derive_key(seed: int, stream_id: int) -> int:
    """Mix (seed, stream_id) into a single 64-bit stream key."""
    return mix64(mix64(seed ^ _SEED_SALT) + (stream_id * _GAMMA & MASK64))


class RngStream:
    """Counter-based generator keyed by (seed, stream_id).

    Streams for distinct stream ids under the same seed are independent;
    re-deriving the same (seed, stream_id) yields the identical sequence.
    """

    __slots__ = ("seed", "stream_id", "_key", "_counter")

    def __init__(self, seed: int, stream_id: int):
        self.seed = seed & MASK64
        self.stream_id = stream_id & MASK64
        self._key = derive_key(self.seed, self.stream_id)
        self._counter = 0

    def __repr__(self) -> str:
        return (
            f"RngStream(seed={self.seed}, stream_id={self.stream_id}, "
            f"draws={self._counter})"
        )

    @property
    def draws(self) -> int:
        """Number of raw 64-bit words drawn so far."""
        return self._counter

    def next_u64(self) -> int:
        self._counter += 1
        return mix64(self._key + self._counter * _GAMMA)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0**-53

    def random_positive(self) -> float:
        """Uniform float in (0, 1]; safe as a log() argument."""
        return ((self.next_u64() >> 11) + 1) * 2.0**-53

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive. Unbiased."""
        if lo > hi:
            raise ValueError(f"empty range [{lo}, {hi}]")
        span = hi - lo + 1
        if span == 1:
            return lo
        # Rejection sampling on the smallest covering bit mask keeps the
        # distribution exact; expected iterations < 2.
        mask = (1 << (span - 1).bit_length()) - 1
        while True:
            v = self.next_u64() & mask
            if v < span:
                return lo + v

    def expovariate(self, mean: float) -> float:
        """Exponential variate with the given mean, from one draw in (0, 1]."""
        if mean <= 0:
            raise ValueError("mean must be positive")
        return -mean * math.log(self.random_positive())
