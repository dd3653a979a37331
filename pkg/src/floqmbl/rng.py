"""Seeded random streams.

All stochastic routines draw from a Philox counter-based generator keyed by
an explicit 64-bit seed. Per-realization seeds come from :func:`split_seed`.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def split_seed(master: int, index: int) -> int:
    """Seed of realization ``index`` under ``master``.

    The rule is ``splitmix64(master + index * 0x9E3779B97F4A7C15 mod 2**64)``.
    The finaliser is a bijection and the golden increment is odd, so distinct
    indices below ``2**64`` always give distinct seeds.
    """
    if index < 0:
        raise ValueError("index must be non-negative")
    return _splitmix64((int(master) + int(index) * _GOLDEN) & _MASK)


def make_rng(seed) -> np.random.Generator:
    """Philox generator for a 64-bit seed (or pass a Generator through)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(int(seed) & _MASK))
