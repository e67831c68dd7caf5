"""Deterministic seed-stream helpers.

Every stochastic operation in the package takes an explicit integer seed and
derives its generator through :func:`substream`, so results are reproducible
bit-for-bit and independent sub-computations (chains, ensemble members, MC
chunks) each own a disjoint stream keyed by position, not by worker.
"""

import numpy as np


def substream(seed, *path):
    """Generator for the stream identified by ``(seed, *path)``.

    ``path`` elements are small non-negative integers naming a fixed position
    in the computation (chunk index, chain index, member index, ...).  The
    same key always yields the same stream, regardless of how many other
    streams were drawn from.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.default_rng([int(seed), *[int(p) for p in path]])
