"""Deterministic stream derivation for reproducible campaigns.

All randomness in the package is drawn from ``numpy.random.Generator``
instances built here.  A stream is addressed by a master seed plus an
integer key path, e.g. ``(REPLICATION, r)`` for replication ``r`` or
``(2, p)`` for the mutation phase at level ``p`` inside one run.  The
derivation uses ``numpy.random.SeedSequence`` spawn keys, which are
counter-based: the stream for a given key path never depends on how many
other streams exist, so raising the replication count later leaves all
earlier replications bitwise unchanged.
"""

from __future__ import annotations

import numpy as np

# Top-level stream ids used by the campaign layer.
REPLICATION = 0


def seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Return the seed sequence addressed by ``(master_seed, key...)``."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Return a fresh generator for the stream addressed by ``key``."""
    return np.random.default_rng(seed_sequence(master_seed, *key))
