"""Deterministic, splittable random streams.

Every stochastic routine takes an explicit ``numpy.random.Generator``.
Ensemble drivers derive one independent stream per trial from
``(master_seed, trial_index)``, so results are bit-reproducible no
matter how trials are scheduled across workers.
"""
from __future__ import annotations

import numpy as np


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream addressed by (master seed, index path)."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.PCG64(ss))
