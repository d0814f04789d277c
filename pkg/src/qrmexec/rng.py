"""Seed management and a fast scalar uniform source.

Every experiment derives its random streams from one master seed.  A stream
is identified by a role name and an integer index, so running episodes in a
different order (or in parallel) never changes what each episode sees.
"""
from __future__ import annotations

import zlib

import numpy as np


def role_key(role: str) -> int:
    """Stable 32-bit key for a role name (``hash()`` is salted per process)."""
    return zlib.crc32(role.encode("utf-8"))


def stream(master_seed: int, role: str, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(role, index)`` under ``master_seed``."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(role_key(role), int(index)))
    return np.random.default_rng(seq)


class BufferedUniform:
    """Scalar ``random()`` backed by blocks of numpy uniforms.

    The event loop draws a few uniforms per event; calling
    ``Generator.random()`` one float at a time dominates the runtime, so
    floats are pulled in blocks and handed out from a Python iterator.
    The object quacks like the subset of ``numpy.random.Generator`` the
    simulator uses.
    """

    __slots__ = ("generator", "block", "_it")

    def __init__(self, rng: np.random.Generator | int | None = None, block: int = 4096):
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self.generator = rng
        self.block = block
        self._it = iter(())

    def random(self) -> float:
        try:
            return next(self._it)
        except StopIteration:
            self._it = iter(self.generator.random(self.block).tolist())
            return next(self._it)


def as_uniform_source(rng) -> BufferedUniform | np.random.Generator:
    """Wrap ints/None into a buffered source; pass generators and sources through."""
    if rng is None or isinstance(rng, (int, np.integer)):
        return BufferedUniform(rng)
    return rng
