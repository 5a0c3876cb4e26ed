"""Portable seeded random stream.

Backed by the PCG64 (XSL-RR 128/64) bit generator. Only raw 64-bit outputs
are consumed and converted to doubles here, so the stream does not depend on
any distribution code that might change between library versions.
"""

from __future__ import annotations

import numpy as np

_TWO_POW_M53 = 1.0 / 9007199254740992.0


class Pcg64Stream:
    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self._bitgen = np.random.PCG64(seed)

    def raw(self, count: int) -> np.ndarray:
        return self._bitgen.random_raw(int(count)).astype(np.uint64, copy=False)

    def uniform(self, count: int) -> np.ndarray:
        """``count`` doubles in [0, 1) with 53 random bits each."""
        return (self.raw(count) >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53

    def uniform_box(self, lower, upper, count: int) -> np.ndarray:
        """Points uniform in the box, drawn row-major (all coordinates of row 0 first)."""
        lo = np.asarray(lower, dtype=np.float64)
        hi = np.asarray(upper, dtype=np.float64)
        u = self.uniform(count * lo.shape[0]).reshape(count, lo.shape[0])
        return lo + (hi - lo) * u

    def integers(self, low: int, high: int, count: int) -> np.ndarray:
        """Integers uniform in the closed range ``[low, high]``."""
        span = high - low + 1
        return low + np.floor(self.uniform(count) * span).astype(np.int64)
