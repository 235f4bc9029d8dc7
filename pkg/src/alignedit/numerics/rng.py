"""Counter-based deterministic random streams.

Each stream is a Philox4x64 generator keyed by sha256(seed, name). A draw
advances the Philox counter by a fixed stride, so draw `i` of a stream is a
pure function of (seed, name, i) on every platform. Independent consumers
(data generation, noise, parameter init, batching) get their own named
streams and never perturb each other.
"""
from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "philox4x64"

# One stride is 2**28 * 4 uint64 outputs, far beyond any single draw here.
_STRIDE = 2 ** 28


def _derive_key(seed, name):
    digest = hashlib.sha256(f"{seed & 0xFFFFFFFFFFFFFFFF}:{name}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


class RngStream:
    """Named, counter-addressable stream of random draws."""

    def __init__(self, seed, name, counter=0):
        self.seed = int(seed)
        self.name = str(name)
        self.counter = int(counter)
        self._key = _derive_key(self.seed, self.name)

    def spawn(self, child):
        """Independent sub-stream; deterministic in (seed, full name)."""
        return RngStream(self.seed, f"{self.name}/{child}")

    def _next_gen(self):
        bg = np.random.Philox(key=self._key)
        bg.advance(self.counter * _STRIDE)
        self.counter += 1
        return np.random.Generator(bg)

    def normal(self, shape=(), dtype=np.float32):
        return self._next_gen().standard_normal(size=shape, dtype=np.float64).astype(dtype)

    def uniform(self, low=0.0, high=1.0, shape=(), dtype=np.float32):
        return self._next_gen().uniform(low, high, size=shape).astype(dtype)

    def integers(self, low, high, shape=()):
        return self._next_gen().integers(low, high, size=shape)

    def permutation(self, n):
        return self._next_gen().permutation(n)

    def choice(self, seq):
        idx = int(self._next_gen().integers(0, len(seq)))
        return seq[idx]

    def __repr__(self):
        return f"RngStream({ALGORITHM}, seed={self.seed}, name={self.name!r}, counter={self.counter})"
