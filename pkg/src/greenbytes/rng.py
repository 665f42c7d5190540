"""Seedable PRNG used everywhere randomness is needed.

The generator is SplitMix64 (Steele, Lea & Flood's mix of the Weyl sequence
with a 64-bit finalizer), chosen because the whole algorithm fits in a few
lines and is pinned here exactly: any rebuild of this package, on any
platform, produces the same streams for the same seed. Gaussian deviates come
from the polar Box-Muller transform on top of the uniform stream, with the
spare deviate cached.
"""

from __future__ import annotations

import math

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """Deterministic 64-bit-state generator.

    next_u64:  state += 0x9E3779B97F4A7C15; z = state;
               z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
               z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
               return z ^ (z >> 31)       (all mod 2**64)
    uniform:   next_u64 / 2**64, then scaled to [lo, hi)
    gauss:     polar Box-Muller over uniform(-1, 1) pairs
    """

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64
        self._spare_gauss: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * (self.next_u64() / 2.0**64)

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        if self._spare_gauss is not None:
            z = self._spare_gauss
            self._spare_gauss = None
            return mu + sigma * z
        # Polar rejection loop; accepted pairs yield two deviates.
        while True:
            u = self.uniform(-1.0, 1.0)
            v = self.uniform(-1.0, 1.0)
            s = u * u + v * v
            if 0.0 < s < 1.0:
                scale = math.sqrt(-2.0 * math.log(s) / s)
                self._spare_gauss = v * scale
                return mu + sigma * (u * scale)
