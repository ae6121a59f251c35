"""Seeded, splittable random streams.

Every stochastic component of the lab (weight init, channel draws, poison
selection, epoch shuffling, evaluation, titration) pulls from its own
RandomStream so that adding draws to one purpose never perturbs another.
Streams are keyed by (seed, purpose, worker) on a counter-based Philox
generator; gaussians come from Box-Muller on the raw uniform doubles, so the
draw sequence is a fixed function of the key on every platform.
"""

from __future__ import annotations

import numpy as np

# Purpose ids. Fixed forever; changing one silently re-seeds that subsystem.
INIT = 1
CHANNEL = 2
POISON = 3
SHUFFLE = 4
EVAL = 5
TITRATE = 6
DATA = 7
PROBE = 8

_MASK64 = (1 << 64) - 1


class RandomStream:
    """Deterministic uniform/gaussian source for one (seed, purpose, worker)."""

    def __init__(self, seed: int, purpose: int, worker: int = 0):
        self.seed = int(seed)
        self.purpose = int(purpose)
        self.worker = int(worker)
        key = [self.seed & _MASK64, ((self.purpose << 32) ^ self.worker) & _MASK64]
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def split(self, worker: int) -> "RandomStream":
        """Child stream for a worker/grid index; independent of the parent."""
        return RandomStream(self.seed, self.purpose, self.worker * 1024 + worker + 1)

    def uniform(self, shape=()):
        """Doubles in [0, 1); a bare float when shape is ()."""
        if not shape:
            return float(self._gen.random(1)[0])
        return self._gen.random(int(np.prod(shape))).reshape(shape)

    def gaussian(self, shape, dtype=np.float64) -> np.ndarray:
        """Standard normals via Box-Muller; always consumes whole pairs."""
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)  # in (0, 1], keeps log finite
        u2 = self._gen.random(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        out = z[:n].reshape(shape if shape else ()).astype(dtype)
        return out

    def uniform_range(self, low: float, high: float, shape, dtype=np.float64) -> np.ndarray:
        u = self._gen.random(int(np.prod(shape))).reshape(shape)
        return (low + (high - low) * u).astype(dtype)

    def permutation(self, n: int) -> np.ndarray:
        """Uniform permutation of range(n) (argsort of fresh uniforms)."""
        return np.argsort(self._gen.random(n), kind="stable")

    def choice(self, n: int, m: int) -> np.ndarray:
        """m indices drawn from range(n) without replacement."""
        if m > n:
            raise ValueError(f"cannot draw {m} from {n} without replacement")
        return self.permutation(n)[:m]
