"""Deterministic RNG derivation.

Every random draw in the package comes from a generator built here, so
a run is a pure function of (seed, structural position). Structural
positions are small stream constants plus indices such as the frame
number, which also makes per-frame generation safe to parallelize.
"""

import numpy as np

STREAM_SCENE = 1
STREAM_EPISODES = 2
STREAM_TABLE = 3
STREAM_DETECTOR = 4
STREAM_NOISE = 5
STREAM_WEIGHTS = 6
STREAM_PERTURB = 7


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the stream identified by (seed, *keys)."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    if any(k < 0 for k in keys):
        raise ValueError("stream keys must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))
