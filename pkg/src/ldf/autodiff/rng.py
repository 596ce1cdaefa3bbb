"""Seeded random streams.

All randomness goes through NumPy's PCG64 bit generator, whose output for a
given seed is fixed across platforms. Worker streams are derived with
``SeedSequence.spawn`` so they are independent of how many workers run.
"""

import numpy as np


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def split_rngs(seed, n):
    """``n`` independent generators derived deterministically from ``seed``."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]
