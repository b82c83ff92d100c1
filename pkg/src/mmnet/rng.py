"""Seeded random streams.

All randomness in the package flows through :class:`Rng`, a thin wrapper over
numpy's ``PCG64`` bit generator. Child streams are derived with
``numpy.random.SeedSequence`` from ``(seed, *key)`` so that, for example, the
augmentation of sample ``i`` in epoch ``e`` does not depend on how many
numbers were drawn before it.
"""

from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "PCG64 (numpy.random.Generator), children via SeedSequence(seed, spawn_key)"


def _key_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("rng keys must be non-negative")
        return int(part)
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(seed: int, *key) -> int:
    """Stable 64-bit seed from a master seed and a key (ints or strings).

    Unlike ``hash()``, the result does not depend on the interpreter session.
    """
    h = hashlib.sha256(int(seed).to_bytes(8, "little", signed=False))
    for part in key:
        h.update(b"\x00" + str(part).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


class Rng:
    """Deterministic random stream identified by a 64-bit seed and a key path."""

    def __init__(self, seed: int, key: tuple = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.key = tuple(key)
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_key_int(k) for k in self.key))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, *key) -> "Rng":
        return Rng(self.seed, self.key + tuple(key))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, size=None, scale=1.0):
        return self.generator.normal(0.0, scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def random(self, size=None):
        return self.generator.random(size)

    def choice(self, options):
        return options[int(self.generator.integers(0, len(options)))]

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, key={self.key!r})"
