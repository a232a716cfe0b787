"""Seed derivation.

Every random stream in the package is keyed by the user seed plus a
purpose label (and optionally integer counters), so results never depend on
call order or on how work is split across threads.
"""

import hashlib

import numpy as np


def label_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(seed: int, label: str, *counters: int) -> np.random.SeedSequence:
    """SeedSequence keyed by ``(seed, label, *counters)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.SeedSequence([int(seed), label_key(label), *map(int, counters)])


def rng_for(seed: int, label: str, *counters: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, label, *counters))


def derive_int(seed: int, label: str, *counters: int) -> int:
    """A 63-bit integer sub-seed, for handing to functions that take ``seed: int``."""
    state = derive_seed(seed, label, *counters).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)
