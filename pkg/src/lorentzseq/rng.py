"""Seeded random streams.

Every consumer derives its own Philox (counter-based) stream from the base
seed plus a tuple of stream keys, so streams never overlap and adding a
consumer never shifts another one's draws.
"""

import numpy as np

# stream keys
SPLIT = 1
SYNTH = 2
SELFCHECK = 3


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))
