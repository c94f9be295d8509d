"""Named, independent random streams derived from one 64-bit seed.

Every stream is a PCG64 generator seeded by ``SeedSequence([seed, purpose, *extra])``
so that adding draws to one purpose never shifts another.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {"data": 1, "init": 2, "dropout": 3, "shuffle": 4, "oracle": 5}


def stream(seed: int, purpose: str, *extra: int) -> np.random.Generator:
    if purpose not in PURPOSES:
        raise KeyError(f"unknown random stream purpose {purpose!r}")
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    entropy = [int(seed), PURPOSES[purpose], *(int(e) for e in extra)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
