"""Deterministic named random streams derived from a single base seed.

Every source of randomness in the library draws from one of a few named
streams so that, e.g., shot noise can be varied while GP drive realizations
stay fixed.  Streams are derived from the base seed via spawn keys, so the
same (seed, name, index) always yields the same sequence.
"""

from __future__ import annotations

import numpy as np

STREAM_IDS = {
    "init": 0,
    "ebm-sampling": 1,
    "measurement": 2,
    "gp-drive": 3,
    "trial-index": 4,
}


def stream(base_seed: int, name: str, *indices: int) -> np.random.Generator:
    """Generator for the named stream; extra indices create substreams."""
    if name not in STREAM_IDS:
        raise ValueError(f"unknown rng stream {name!r}")
    key = (STREAM_IDS[name],) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(base_seed), spawn_key=key))
