"""Reproducible random streams.

All randomness in the library flows through counter-based Philox
generators keyed by (seed, *path).  A given path always yields the same
stream, so parallel realizations are reproducible independently of
scheduling order.
"""

import numpy as np

# stream namespaces, used as the first path component
PERTURBATION = 0
OBSERVATION = 1
CHAIN = 2
INSTANCE = 3


def substream(seed, *path):
    """Return a Generator for the stream identified by (seed, *path)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
