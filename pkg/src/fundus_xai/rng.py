"""Deterministic pseudo-randomness via SplitMix64.

Every stochastic choice in the package (weight init, shuffling, synthetic
data) flows through this generator so that a seed fixes the full run across
platforms. SplitMix64 steps a 64-bit counter by a fixed odd constant and
scrambles it with two xor-multiply rounds; the scramble is stateless given
the counter, so a block of n draws can be produced vectorized with numpy
uint64 arithmetic and is bit-identical to n sequential calls.
"""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_INV_2_53 = 2.0 ** -53


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * _MUL1 & _MASK64
    z = (z ^ (z >> 27)) * _MUL2 & _MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    # uint64 ops wrap silently, matching the scalar masked arithmetic
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """64-bit SplitMix generator with scalar and block interfaces."""

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64

    @property
    def state(self) -> int:
        return self._state

    def next_uint64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix(self._state)

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_uint64() >> 11) * _INV_2_53

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def fill_uniform(self, n: int, low: float, high: float) -> np.ndarray:
        """n uniform draws in [low, high), identical to n uniform() calls."""
        counters = self._state + (np.arange(1, n + 1, dtype=np.uint64)) * np.uint64(_GOLDEN)
        self._state = (self._state + n * _GOLDEN) & _MASK64
        u = (_mix_array(counters) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return low + (high - low) * u

    def randbelow(self, n: int) -> int:
        """Integer in [0, n). Plain modulo; bias is irrelevant here, the
        contract is determinism, not statistical perfection."""
        if n <= 0:
            raise ArgumentError("randbelow requires a positive bound")
        return self.next_uint64() % n

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of arange(n)."""
        perm = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
