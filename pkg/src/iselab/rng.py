"""Counter-based random streams.

Every random value in the package is produced by a Philox generator keyed
by (master seed, purpose tag) with the counter set from an integer index
tuple.  This makes each value a pure function of its coordinates: sampling
is independent of enumeration order and of how work is split across
processes.
"""

import numpy as np

_MASK64 = (1 << 64) - 1

# Purpose tags decorrelate independent uses of the same master seed.
SITE_VALUES = 1
TRIAL_STREAM = 2
EVENT_TRIALS = 3
COMBINATIONS = 4


def _counter_words(index):
    index = tuple(int(i) for i in index)
    if len(index) > 4:
        raise ValueError("counter streams support index tuples of length <= 4")
    words = [i & _MASK64 for i in index] + [0] * (4 - len(index))
    return np.array(words, dtype=np.uint64)


def stream(seed, purpose, index=()):
    """Fresh generator for (seed, purpose, index)."""
    key = (int(seed) & _MASK64) | ((int(purpose) & _MASK64) << 64)
    bitgen = np.random.Philox(key=key, counter=_counter_words(index))
    return np.random.Generator(bitgen)


def uniform_at(seed, purpose, index):
    """Single uniform in [0, 1) at the given coordinates."""
    return float(stream(seed, purpose, index).random())


def derive_seed(seed, purpose, index):
    """63-bit child seed for a sub-stream."""
    return int(stream(seed, purpose, index).integers(0, 1 << 63))
