"""Seed derivation for reproducible parallel work.

All randomness in the package flows through numpy Generators seeded
explicitly.  When a run fans out over many inputs (one classification per
image, one sample set per repetition), each unit of work gets its own seed
derived from the master seed and the unit's index.  Derivation uses the
splitmix64 finalizer, so derived seeds are decorrelated and the mapping
(master, index) -> seed is a documented pure function: results are
independent of execution order and of how many workers run in parallel.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *indices: int) -> int:
    """Derive a child seed from ``master`` and one or more indices.

    Each index is folded in with the splitmix64 finalizer:

        state <- splitmix64(state) xor splitmix64(state + index + 1)

    Nested derivation composes: derive_seed(derive_seed(m, i), j) is the
    same as deriving along the path (i, j) one level at a time, and distinct
    paths give decorrelated seeds.
    """
    state = _splitmix64(int(master) & _MASK)
    for idx in indices:
        state = _splitmix64(state) ^ _splitmix64((state + int(idx) + 1) & _MASK)
        state &= _MASK
    return state


def generator(seed: int) -> np.random.Generator:
    """A fresh PCG64 Generator for ``seed``.  Single chokepoint so every
    module draws from the same bit-generator family."""
    return np.random.default_rng(seed)
