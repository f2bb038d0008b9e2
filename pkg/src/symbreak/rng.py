"""Named counter-based random streams.

Each stream is a Philox generator keyed by ``(seed, operation name, index)``,
so a trial's draws do not depend on how many other trials ran before it or on
which worker ran it.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, op: str, index: int = 0) -> np.random.Generator:
    key = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(op.encode()), int(index)])
    return np.random.Generator(np.random.Philox(key))
