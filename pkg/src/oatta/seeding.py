"""Named, independent random substreams derived from one integer seed.

Every generator is PCG64 seeded through ``SeedSequence(seed, spawn_key=...)``,
so the label stream and the synthetic predictor of one seed never share draws
and each is reproducible on its own.
"""
from __future__ import annotations

import numpy as np

PURPOSES = {"stream": 0, "predictor": 1, "calibration": 2, "validation": 3}


def rng_for(seed: int, purpose: str = "stream") -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = PURPOSES[purpose]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(key,))))
