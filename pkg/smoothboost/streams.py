"""Seeded random streams.

One master seed fans out into independent numpy generators keyed by small
integers (a boosting iteration, a cross-validation fold). The same seed and
key always give the same stream, no matter how many threads consume other
streams at the same time, so results are reproducible under any thread count.
"""

import numpy as np

from .model import InvalidArgumentError

__all__ = ["check_seed", "derive_seed", "stream"]

_SEED_LIMIT = 2 ** 64


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < _SEED_LIMIT:
        raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
    return seed


def _sequence(seed: int, keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(key) for key in keys))


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, keys)."""
    return np.random.default_rng(_sequence(seed, keys))


def derive_seed(seed: int, *keys: int) -> int:
    """A 64-bit child seed, for handing to code that takes a plain integer seed."""
    return int(_sequence(seed, keys).generate_state(1, dtype=np.uint64)[0])
