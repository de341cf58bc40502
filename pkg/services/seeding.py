"""Deterministic derivation of independent random streams.

Streams are keyed by tuples of non-negative integers (base seed, instance
index, attempt, purpose, ...) and mixed through numpy's ``SeedSequence``, so
the numbers an instance sees do not depend on which worker runs it or in
which order instances complete.
"""

from typing import Tuple

import numpy as np

RNG_IDENTIFIER = "numpy.PCG64+SeedSequence"

# draw purposes
PURPOSE_S_GRID = 1
PURPOSE_CONTINGENCY = 2
PURPOSE_NODAL = 3
PURPOSE_BOOTSTRAP = 11
PURPOSE_SUBSAMPLE = 12
PURPOSE_MLP_INIT = 13
PURPOSE_MLP_SHUFFLE = 14
PURPOSE_MLP_SPLIT = 15


def _entropy(keys: Tuple[int, ...]) -> list:
    entropy = [int(key) for key in keys]
    if any(key < 0 for key in entropy):
        raise ValueError(f"seed keys must be non-negative, got {keys}")
    return entropy


def derive_rng(*keys: int) -> np.random.Generator:
    """Return a generator whose stream is a pure function of ``keys``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_entropy(keys))))


def derive_seed(*keys: int) -> int:
    """Return a 64-bit integer seed that is a pure function of ``keys``."""
    state = np.random.SeedSequence(_entropy(keys)).generate_state(1, dtype=np.uint64)
    return int(state[0])
