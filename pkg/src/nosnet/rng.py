"""Reproducible random streams.

Every consumer gets its own Philox (counter-based) generator keyed by
``(seed, *stream_ids)``, so adding a new consumer never perturbs the draws of
an existing one and streams agree across platforms.
"""

from __future__ import annotations

import numpy as np

# fixed stream ids; values are part of the reproducibility contract
STREAM_DRIVE = 11
STREAM_THRESHOLD = 12
STREAM_MMPP = 13
STREAM_GRAPH = 14
STREAM_QUEUE = 15
STREAM_MISC = 19


def stream(seed: int, *ids: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be >= 0")
    ss = np.random.SeedSequence([int(seed), *map(int, ids)])
    return np.random.Generator(np.random.Philox(ss))
