"""Counter-based RNG streams.

Every random stream is a Philox generator keyed by a SeedSequence over
``(master_seed, *keys)``. Episodes, streams within an episode and per-object
draws get disjoint keys, so results never depend on execution order.
"""
from __future__ import annotations

import numpy as np


def stream(*keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


def derive_seed(*keys: int) -> int:
    """A 63-bit integer seed derived from ``keys``."""
    words = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, dtype=np.uint32)
    return int(words[0]) << 31 ^ int(words[1])
