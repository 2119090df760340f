"""Deterministic derivation of independent random streams from one master seed.

Stream ``(replicate, purpose)`` is ``SeedSequence(master, spawn_key=(replicate, code))``
with codes truth=0, distortion=1, chain=2, init=3.  Single runs use replicate 0.
"""

from __future__ import annotations

import numpy as np

STREAMS = {"truth": 0, "distortion": 1, "chain": 2, "init": 3}


def stream(master: int, purpose: str, replicate: int = 0) -> np.random.Generator:
    if purpose not in STREAMS:
        raise KeyError(f"unknown random stream {purpose!r}")
    seq = np.random.SeedSequence(int(master), spawn_key=(int(replicate), STREAMS[purpose]))
    return np.random.default_rng(seq)
