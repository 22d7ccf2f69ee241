"""Seeded, splittable random streams.

Every stochastic routine in the package takes a ``numpy.random.Generator``.
Generators are built on Philox (a counter-based bit generator) keyed by a
``(seed, stream)`` pair so that independent chains never share state and any
run can be replayed from its metadata.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    seed = int(seed) & MASK64
    ss = np.random.SeedSequence(seed, spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a fresh 63-bit seed from ``rng`` (for nested deterministic work)."""
    return int(rng.integers(0, 2**63 - 1))
