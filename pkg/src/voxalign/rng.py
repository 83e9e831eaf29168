"""Deterministic random streams with labelled children.

Randomness comes from the counter-based Philox generator keyed by a
SHA-256 digest of ``(seed, label)``. The same pair yields a bit-identical
stream on every platform, and distinct labels yield streams that are
independent by construction, so neither creation order nor consumption
order of sibling streams can affect results.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MAX_SEED = 2**64 - 1


class Rng:
    """Seeded random source; derive independent streams via :meth:`child`."""

    def __init__(self, seed: int, label: str = "root"):
        seed = int(seed)
        if not 0 <= seed <= _MAX_SEED:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.label = label
        digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
        key = int.from_bytes(digest[:16], "little")
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, label: str) -> "Rng":
        """Independent stream identified by this stream's label plus `label`."""
        return Rng(self.seed, f"{self.label}/{label}")

    def normal(self, *shape: int) -> np.ndarray:
        """Standard normal draws with the given shape."""
        return self._gen.standard_normal(size=shape, dtype=np.float64)

    def uniform(self, low: float, high: float, *shape: int) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def random(self, *shape: int) -> np.ndarray:
        """Uniform draws in [0, 1)."""
        return self._gen.random(size=shape, dtype=np.float64)

    def integers(self, low: int, high: int, *shape: int) -> np.ndarray:
        """Integer draws in [low, high)."""
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Rng(seed={self.seed}, label={self.label!r})"
