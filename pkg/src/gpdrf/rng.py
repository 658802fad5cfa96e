"""Keyed random streams.

Every draw in the package comes from a generator keyed by an integer
tuple, e.g. ``(seed, TAG_W, layer)`` or ``(seed, TAG_EPS, epoch, step)``,
so results do not depend on the order in which streams are consumed.
"""

import numpy as np

TAG_INIT = 1
TAG_W = 2
TAG_OMEGA = 3
TAG_EPS = 4
TAG_BATCH = 5
TAG_INDUCING = 6
TAG_PREDICT = 7
TAG_SPLIT = 8
TAG_SPECTRA = 9
TAG_TARGET = 10


def keyed(seed, *key):
    """Independent generator for ``(seed, *key)``."""
    if isinstance(seed, np.random.Generator):
        if key:
            raise TypeError("cannot key an existing Generator")
        return seed
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
