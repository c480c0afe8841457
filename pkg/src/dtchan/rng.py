"""Seeded random-stream policy.

All randomness in the package flows through named PCG64 streams derived
from one master seed, so that every artifact (scenario, dataset sample,
point cloud, pilot mask) is reproducible bit-for-bit from that seed.

A stream is addressed by the master seed plus an integer path, e.g.
``substream(seed, STREAM_SCENARIO, index)``. Paths are combined through
``numpy.random.SeedSequence``, whose spawning arithmetic is stable across
numpy versions.
"""

import numpy as np

# Fixed stream tags; never renumber (would silently change datasets).
STREAM_SCENARIO = 0
STREAM_UT_DRAW = 1
STREAM_PILOT = 2
STREAM_SENSING = 3
STREAM_NOISE = 4
STREAM_SPLIT = 5


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Return the PCG64 generator for one named stream of a master seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(master_seed), *map(int, path)))))
