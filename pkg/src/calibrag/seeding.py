"""Deterministic RNG substream derivation.

Every random draw in the package flows from one integer seed.  Substreams
are derived by hashing the seed together with a short text label, so the
stream a consumer sees depends only on (seed, label) and never on the
order in which other consumers drew their streams.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, label: str) -> int:
    """Map (seed, label) to a 64-bit substream seed via SHA-256."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed: int, label: str) -> np.random.Generator:
    """Independent generator for the substream named by ``label``."""
    return np.random.default_rng(derive_seed(seed, label))
