"""Sub-seed derivation from one master seed.

``derive_seed(master, a, b, ...)`` hashes the master seed together with a
counter path through ``numpy.random.SeedSequence``; the same path always
yields the same 63-bit seed and distinct paths are independent.
"""
from __future__ import annotations

import numpy as np

# counter-path roots used across the package
SPLIT, TRAIN, SYNTH, PERTURB = 0, 1, 2, 3


def derive_seed(master: int, *path: int) -> int:
    state = np.random.SeedSequence([int(master), *map(int, path)]).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))
