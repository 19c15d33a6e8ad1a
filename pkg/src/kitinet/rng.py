"""Seeded random streams.

Every stochastic call site derives its own generator from a root seed plus a
path of integer words (e.g. ``(seed, STREAM_DSMC, step, cell)``), so results do
not depend on evaluation order or on how work is scheduled.
"""
import numpy as np

GENERATOR_FAMILY = "numpy Philox4x64-10, keyed by SeedSequence(seed, *path)"

# stream tags, kept distinct so subsystems never share a stream
STREAM_KITI = 1
STREAM_DSMC_INIT = 2
STREAM_DSMC_STEP = 3
STREAM_NET_INIT = 4
STREAM_NET_DATA = 5
STREAM_CHECK = 6
STREAM_AEDITION = 7

_U64 = (1 << 64) - 1


def stream(seed, *path):
    """Return an independent ``numpy.random.Generator`` for ``(seed, *path)``."""
    words = [int(seed) & _U64] + [int(p) & _U64 for p in path]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def as_generator(rng):
    """Accept a Generator, an integer seed, or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng()
    return stream(rng)
