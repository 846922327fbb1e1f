"""Named, reproducible random substreams.

Every source of randomness in the toolkit derives from one master seed
plus a tuple of string labels (e.g. ``("noise",)`` or ``("scenario", "17")``).
Labels are hashed with CRC32, which is stable across platforms and Python
versions, so the same (seed, labels) pair always yields the same stream
regardless of how many other streams were drawn in between.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, *labels: str | int) -> np.random.Generator:
    """Return an independent PCG64 generator for (seed, labels)."""
    keys = [int(seed)]
    for label in labels:
        if isinstance(label, int):
            keys.append(label & 0xFFFFFFFF)
        else:
            keys.append(zlib.crc32(str(label).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(keys))
