"""Seed handling and per-block stream derivation.

Every sampler takes a ``numpy.random.Generator``. Samplers that split work
into blocks draw one 63-bit root from the caller's generator and derive each
block's stream from ``SeedSequence(root, spawn_key=block_key)``, so a block's
draws do not depend on which worker runs it or in what order.
"""

from __future__ import annotations

import numpy as np


def as_generator(seed=None) -> np.random.Generator:
    """Accept a seed, a ``SeedSequence`` or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_root(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


def derived_generator(root: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(root, spawn_key=tuple(key)))
