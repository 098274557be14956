"""Counter-based random streams keyed by (master seed, purpose tag, index).

Every particle (or sample path) owns a Philox stream whose key is derived
from ``(seed, tag, index)`` via :class:`numpy.random.SeedSequence`. Draws
for a stream never depend on how many other streams exist, how they are
ordered, or how the work is split between processes.
"""

from __future__ import annotations

import hashlib

import numpy as np


def tag_code(tag: str) -> int:
    """Stable 64-bit integer for a purpose tag (blake2b, little-endian)."""
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


def derive_seed(seed: int, tag: str, *index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & (2**64 - 1), tag_code(tag), *map(int, index)])


def stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(derive_seed(seed, tag, *index)))


def _as_tuple(i):
    return tuple(map(int, i)) if isinstance(i, (tuple, list)) else (int(i),)


class StreamBank:
    """A set of per-index Gaussian streams read step by step.

    ``normals(k)`` returns the ``(n_streams, dim)`` standard normal draws for
    step ``k``. Draws are produced in blocks of ``chunk`` steps per stream;
    the values do not depend on the block size. Steps must be requested in
    nondecreasing order.
    """

    def __init__(self, seed, tag, indices, dim, chunk=512, prefix=()):
        self.seed = int(seed)
        self.tag = tag
        self.indices = [tuple(prefix) + _as_tuple(i) for i in indices]
        self.dim = int(dim)
        self.chunk = int(chunk)
        self._gens = [stream(self.seed, tag, *ix) for ix in self.indices]
        self._base = -self.chunk
        self._buf = None

    def __len__(self):
        return len(self._gens)

    def normals(self, step):
        if step < self._base:
            raise ValueError("StreamBank steps must be read in order")
        while step >= self._base + self.chunk:
            self._buf = np.stack([g.standard_normal((self.chunk, self.dim)) for g in self._gens])
            self._base += self.chunk
        return self._buf[:, step - self._base, :]

    def subset(self, positions):
        """A fresh bank over the streams at the given positions (step 0)."""
        picked = [self.indices[p] for p in positions]
        bank = StreamBank.__new__(StreamBank)
        bank.seed, bank.tag, bank.dim, bank.chunk = self.seed, self.tag, self.dim, self.chunk
        bank.indices = picked
        bank._gens = [stream(self.seed, self.tag, *ix) for ix in picked]
        bank._base, bank._buf = -self.chunk, None
        return bank
