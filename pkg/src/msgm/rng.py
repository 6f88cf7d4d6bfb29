"""Deterministic, splittable pseudo-randomness.

Every stochastic component in the package draws from an `Rng`, a thin wrapper
around numpy's counter-based Philox generator keyed by (seed, spawn path).
Two streams with the same seed but different spawn paths are statistically
independent and do not interact, so consuming one stream never shifts another.
This is what makes seeded experiments replay exactly.
"""

from __future__ import annotations

import numpy as np


class Rng:
    """Seeded random stream; `child(i)` derives an independent sub-stream."""

    def __init__(self, seed: int, spawn_path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.spawn_path = tuple(int(p) for p in spawn_path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"Rng(seed={self.seed}, spawn_path={self.spawn_path})"

    def child(self, *path: int) -> "Rng":
        """Independent stream addressed by this stream's path plus `path`."""
        return Rng(self.seed, self.spawn_path + path)

    def normal(self, shape=None) -> np.ndarray:
        if shape is None:
            return self._gen.standard_normal()
        return self._gen.standard_normal(shape)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def rademacher(self, shape) -> np.ndarray:
        return self._gen.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def gaussian_sample(rng: Rng, shape) -> np.ndarray:
    """I.i.d. standard-normal draws with the given shape.

    The shape must be non-empty; deterministic given the rng state.
    """
    shape = tuple(int(s) for s in np.atleast_1d(shape)) if not isinstance(shape, int) else (shape,)
    if len(shape) == 0:
        raise ValueError("gaussian_sample: shape must be non-empty")
    return rng.normal(shape)
