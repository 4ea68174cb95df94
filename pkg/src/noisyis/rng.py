"""Reproducible random streams.

Every stream is a Philox counter-based generator keyed by a single 64-bit
integer. Replication ``i`` of a run seeded with ``base_seed`` uses key
``base_seed + i`` with the counter starting at zero, so a replication's draws
depend only on its index and never on scheduling or thread count.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int) -> np.random.Generator:
    """Return the generator for the 64-bit key ``seed``."""
    if seed < 0:
        raise ValueError(f"rng: seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


def replication_seed(base_seed: int, index: int) -> int:
    return (base_seed + index) & _MASK64
