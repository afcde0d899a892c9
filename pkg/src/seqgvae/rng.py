"""Named, counter-addressed random streams derived from one global seed."""

import numpy as np

STREAMS = {"dataset": 0, "init": 1, "episode": 2, "eval": 3, "shuffle": 4, "sample": 5}


def stream(seed, name, *counters):
    """Independent generator for ``(seed, name, *counters)``."""
    key = (STREAMS[name],) + tuple(int(c) for c in counters)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
