"""Seeded, labelled random streams.

Every stochastic choice in the package (weight init, shuffling, crop
offsets, dropout masks, drop-path masks) draws from its own stream so that
adding draws to one consumer never perturbs another.  A stream is
identified by a root seed, one of the labels below, and an optional tuple
of extra key integers (epoch, step, item index, ...).  Identical
(seed, label, key) always yields an identical sequence; distinct labels or
keys yield statistically independent generators.
"""

import numpy as np

from .errors import UsageError

STREAM_LABELS = ("init", "shuffle", "augment", "dropout", "droppath")


def stream_rng(seed, label, *key):
    """Return a fresh ``numpy.random.Generator`` for (seed, label, *key).

    ``key`` extends the stream address, e.g. ``stream_rng(s, "augment",
    epoch, item)`` gives each image its own generator so augmentation is
    independent of batch scheduling.
    """
    if label not in STREAM_LABELS:
        raise UsageError(
            f"unknown rng stream label {label!r}; expected one of {STREAM_LABELS}")
    seed = int(seed)
    if seed < 0:
        raise UsageError("rng seed must be non-negative")
    spawn = (STREAM_LABELS.index(label),) + tuple(int(k) for k in key)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=spawn)
    return np.random.Generator(np.random.PCG64(ss))
