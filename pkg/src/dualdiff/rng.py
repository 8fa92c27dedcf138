"""Seeded random streams.

Uniforms come from numpy's PCG64 bit generator; Gaussian variates are derived
from those uniforms with the basic Box-Muller transform so the distributional
contract does not depend on numpy's internal normal sampler.
"""
from __future__ import annotations

import numpy as np


class Rng:
    """Deterministic random stream keyed by ``(seed, *keys)``."""

    def __init__(self, seed: int, *keys: int):
        self.seed = int(seed)
        self.keys = tuple(int(k) for k in keys)
        ss = np.random.SeedSequence([self.seed, *self.keys])
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: int) -> "Rng":
        # independent of how much of the parent stream was consumed
        return Rng(self.seed, *self.keys, *keys)

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return low + (high - low) * self._gen.random(size)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        """Integers in the closed range [low, high]."""
        return self._gen.integers(low, high, size=size, endpoint=True)

    def normal(self, size) -> np.ndarray:
        size = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(size))
        m = (n + 1) // 2
        # 1 - U keeps the log argument in (0, 1]
        u1 = 1.0 - self._gen.random(m)
        u2 = self._gen.random(m)
        rad = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * m)
        z[0::2] = rad * np.cos(2.0 * np.pi * u2)
        z[1::2] = rad * np.sin(2.0 * np.pi * u2)
        return z[:n].reshape(size)

    def choice(self, n: int, size: int) -> np.ndarray:
        """Indices drawn uniformly with replacement from range(n)."""
        return self._gen.integers(0, n, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
