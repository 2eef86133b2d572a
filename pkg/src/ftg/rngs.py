"""Seeded random sources.

Every stochastic path in the package draws from ``numpy.random.Generator``
backed by the named PCG64 bit generator, so fixtures reproduce bit-for-bit
across platforms for a given numpy version. Draw order is part of each
consumer's contract (documented at the call sites).
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Return the package-standard generator (PCG64) for an integer seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))
