"""Named, non-aliasing random streams.

Each stream is a Philox counter-based generator keyed by
``(master_seed, seed_index, role)``.
"""

from __future__ import annotations

import numpy as np

ROLES = {"ground_truth": 0, "noise": 1, "sampler": 2, "operator": 3, "prior": 4}


def stream(master_seed: int, seed_index: int, role: str) -> np.random.Generator:
    if role not in ROLES:
        raise KeyError(f"unknown stream role {role!r}")
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(seed_index), ROLES[role]))
    return np.random.Generator(np.random.Philox(seq))
