"""Counter-derived random streams.

Every unit of Monte Carlo work (a trajectory, a bootstrap replication, a CIR
path) owns a generator derived from ``(seed, *key)`` through
:class:`numpy.random.SeedSequence` spawn keys. Results therefore depend only on
the unit's index, never on how units are distributed over workers.
"""

from __future__ import annotations

import zlib

import numpy as np


def label(name: str) -> int:
    """Stable 32-bit integer for a string key component."""
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, *key: int | str) -> np.random.Generator:
    """Return the generator for unit ``key`` under master ``seed``."""
    spawn_key = tuple(label(k) if isinstance(k, str) else int(k) for k in key)
    ss = np.random.SeedSequence(int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key: int | str) -> int:
    """A 63-bit master seed for a nested experiment, e.g. one bootstrap per replication."""
    spawn_key = tuple(label(k) if isinstance(k, str) else int(k) for k in key)
    return int(np.random.SeedSequence(int(seed), spawn_key=spawn_key).generate_state(1, np.uint64)[0] >> 1)
