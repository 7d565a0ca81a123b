"""Seeded, counter-based random streams.

Every random draw in the toolkit comes from a stream keyed by a global seed
plus a tuple of integer/string keys (sample index, epoch, purpose...). The
streams use Philox, so batch order or worker count never changes a draw.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

SEED_ENV = "GDRKIT_SEED"


def _key_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be non-negative, got {key}")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def make_rng(seed: int, *keys) -> np.random.Generator:
    """A Philox-backed generator for ``(seed, *keys)``."""
    entropy = [_key_int(seed)] + [_key_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def resolve_seed(seed=None, default: int = 0) -> int:
    """Explicit seed, else the ``GDRKIT_SEED`` environment variable, else ``default``."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return default
