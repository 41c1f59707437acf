"""Portable deterministic random numbers.

Trials must be reproducible from a seed in any language, so this uses a
fully specified generator instead of numpy's:

* seeding: the 64-bit seed is passed once through SplitMix64
  (increment 0x9E3779B97F4A7C15, multipliers 0xBF58476D1CE4E5B9 and
  0x94D049BB133111EB, shifts 30/27/31); a zero result is replaced by the
  increment constant so the xorshift state is never zero.
* stepping: xorshift64* with shifts (12, 25, 27) and output multiplier
  0x2545F4914F6CDD1D.
* doubles: the top 53 output bits scaled by 2**-53, giving [0, 1).
"""

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x):
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed, index):
    """Seed for sub-stream ``index`` of a base seed (e.g. one per trial)."""
    return splitmix64((seed + (index + 1) * GOLDEN_GAMMA) & MASK64)


class XorShift64Star:
    def __init__(self, seed=0):
        state = splitmix64(int(seed) & MASK64)
        self._state = state or GOLDEN_GAMMA

    def next_u64(self):
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self._state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def random(self):
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform(self, low=-1.0, high=1.0):
        return low + (high - low) * self.random()

    def integers(self, low, high):
        """Integer in the closed range [low, high]."""
        if high < low:
            raise ValueError(f"empty range [{low}, {high}]")
        return low + int(self.random() * (high - low + 1))

    def uniform_array(self, shape, low=-1.0, high=1.0):
        """Array of the given shape filled in row-major order."""
        shape = tuple(int(s) for s in shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        values = [self.uniform(low, high) for _ in range(n)]
        return np.array(values, dtype=np.float64).reshape(shape)
