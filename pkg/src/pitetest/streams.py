"""Keyed random sub-streams.

Every random draw in the package comes from a generator keyed by a master seed
and a tuple of integer indices, so results never depend on how work is split
across threads.
"""

import numpy as np


def substream(seed, *key):
    """Return an independent generator for ``(seed, *key)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def draw_seed(rng):
    """Draw a 63-bit integer seed from ``rng`` for a nested computation."""
    return int(rng.integers(0, 2**63 - 1))
