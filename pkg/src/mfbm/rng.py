"""Deterministic random substreams.

Every random draw in the package comes from a Philox generator keyed by
``(master seed, stream id)`` with the counter offset by ``(mode, replica)``.
Substreams for distinct (stream, replica, mode) triples are independent and a
given triple always reproduces the same numbers, so replicas can be generated
in any order or in parallel.
"""
from __future__ import annotations

import os

import numpy as np

# stream ids; B^H and W must never share one
STREAM_FBM = 1
STREAM_WIENER = 2
STREAM_FAST = 3
STREAM_PROBE = 4

SEED_ENV = "MFBM_SEED"


def resolve_seed(seed: int | None) -> int:
    """Config seed, overridden by the ``MFBM_SEED`` environment variable."""
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return 0 if seed is None else int(seed)


def as_seed(seed: int | None) -> int:
    """Explicit library seed; ``None`` means 0.  The environment is not consulted."""
    return 0 if seed is None else int(seed)


def substream(seed: int, stream: int, replica: int = 0, mode: int = 0) -> np.random.Generator:
    key = [int(seed) % 2 ** 64, int(stream)]
    counter = [0, 0, int(mode), int(replica)]
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def normals(seed, stream, replicas, mode, size) -> np.ndarray:
    """``(len(replicas), size)`` standard normals, row ``r`` from substream ``(r, mode)``."""
    out = np.empty((len(replicas), size))
    for i, r in enumerate(replicas):
        out[i] = substream(seed, stream, r, mode).standard_normal(size)
    return out
