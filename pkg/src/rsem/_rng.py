"""Counter-based random streams.

Every stream is a Philox4x64 generator keyed by the master seed. The two high
words of the 256-bit counter hold ``(path_id, tag)`` so that distinct paths
and distinct purposes (chain jumps vs Brownian increments) never share
counter space. Draws for a given path are therefore identical whether the
path is simulated alone or inside an ensemble, in any order.
"""

import numpy as np

CHAIN = 1
NOISE = 2
AUX = 3

_MASK64 = (1 << 64) - 1


def stream(seed, path_id=0, tag=AUX):
    seed = int(seed)
    if seed < 0 or seed >= 1 << 128:
        raise ValueError("seed must be in [0, 2**128)")
    key = np.array([seed & _MASK64, seed >> 64], dtype=np.uint64)
    counter = np.array([0, 0, int(path_id), int(tag)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
