"""Counter-based Gaussian streams for reproducible, parameter-free noise.

Every (seed, draw index, level, component) tuple owns a disjoint Philox
counter subspace, so a coordinate regenerates bit-identically no matter how
draws are chunked or threaded, and evaluations at different lifting
parameters share exactly the same underlying noise (common random numbers).

Component codes: 0 = coupling matrix G, 1 = scalar block u4, 2 = vector
block u2 (length m), 3 = vector block h (length n).  Level 0 is reserved
for G; the per-level blocks use levels 1..r+1.
"""

from __future__ import annotations

import numpy as np

COMP_G = 0
COMP_U4 = 1
COMP_U2 = 2
COMP_H = 3

_KEY_SALT = 0x9E3779B97F4A7C15  # fixed second key word


def normal_block(seed: int, draw: int, level: int, comp: int, count: int) -> np.ndarray:
    """First ``count`` standard normals of the stream keyed by the tuple."""
    if count == 0:
        return np.empty(0)
    counter = np.array([0, comp, draw, level], dtype=np.uint64)
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(_KEY_SALT)])
    bitgen = np.random.Philox(counter=counter, key=key)
    return np.random.Generator(bitgen).standard_normal(count)
