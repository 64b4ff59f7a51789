"""Deterministic seed derivation for independent component streams.

All randomness in the package flows from integer tuples through
SeedSequence; parts are masked to non-negative 60-bit values so negative
user seeds and negative derived tags (e.g. bucket levels) are accepted.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 60) - 1


def seed_seq(*parts: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(tuple(int(p) & _MASK for p in parts))


def derive_seed(*parts: int) -> int:
    return int(seed_seq(*parts).generate_state(1)[0])


def rng_from(*parts: int) -> np.random.Generator:
    return np.random.default_rng(seed_seq(*parts))
