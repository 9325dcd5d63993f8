"""SplitMix64 generator for portable, bit-reproducible weight initialization.

The tiny extractor's weights must be reproducible bit-for-bit by any
other implementation (including the weight-converter tool), so they are
drawn from this fixed integer recurrence rather than from numpy's RNG.

Stream contract, per 64-bit draw:
    state = (state + 0x9E3779B97F4A7C15) mod 2^64
    z = state;  z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9 (mod 2^64)
    z ^= z >> 27;  z *= 0x94D049BB133111EB (mod 2^64);  z ^= z >> 31
uniform() maps a draw to float64 in [0, 1) as (z >> 11) * 2^-53.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z ^= z >> 30
        z = (z * _MUL1) & _MASK
        z ^= z >> 27
        z = (z * _MUL2) & _MASK
        z ^= z >> 31
        return z

    def uniform(self) -> float:
        """float64 in [0, 1), 53 significant bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53
