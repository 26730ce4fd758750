"""Deterministic, schedule-independent random streams.

Every consumer of randomness derives its generator from the root seed plus a
structural key (trajectory index, step index, chunk index, ...) so results do
not depend on worker count or evaluation order.  Philox is counter-based,
which makes keyed substreams cheap and statistically independent.
"""

import numpy as np


def stream(seed, *key):
    """Generator keyed by (seed, *key); identical arguments give identical draws."""
    parts = [int(seed) & 0xFFFFFFFF]
    for item in key:
        if isinstance(item, str):
            parts.extend(ord(c) for c in item)
        else:
            parts.append(int(item) & 0xFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=np.random.SeedSequence(parts).generate_state(2, np.uint64)))
