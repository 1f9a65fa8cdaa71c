import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for the named stage of a run rooted at ``seed``.

    Streams for different names never share state, so e.g. the evaluation draws
    stay fixed when the training budget changes.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))
