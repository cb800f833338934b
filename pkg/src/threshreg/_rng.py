"""Seed discipline.

A run is driven by one 64-bit seed. Independent streams are derived from it
by counter-based splitting: stream ``k`` of seed ``s`` is the generator built
from ``SeedSequence(entropy=s, spawn_key=(k,))``. Samplers that draw many
replicates split them into fixed-size blocks and give block ``k`` stream
``k``, so results do not depend on how the blocks are scheduled.
"""

import os

import numpy as np

SEED_ENV = "THRESHREG_SEED"
BLOCK = 4096


def default_seed():
    return int(os.environ.get(SEED_ENV, "0"))


def stream(seed, index=0):
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def blocks(n, block=BLOCK):
    """Yield ``(block_index, start, stop)`` covering ``range(n)``."""
    for k, start in enumerate(range(0, n, block)):
        yield k, start, min(start + block, n)
