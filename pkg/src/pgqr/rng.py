"""Named random substreams derived from one master seed."""

import zlib

import numpy as np


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for component ``name`` under master ``seed``.

    The same (seed, name, extra) always yields the same stream, and streams
    with different names do not overlap.
    """
    key = (zlib.crc32(name.encode()), *(int(e) for e in extra))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
