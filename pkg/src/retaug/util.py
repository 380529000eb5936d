"""Small shared helpers: rounding and reproducible per-class RNG derivation."""

from __future__ import annotations

import hashlib
import math

import numpy as np


def round_half_away(value: float) -> int:
    """Round to the nearest integer, halves away from zero."""
    return int(math.floor(value + 0.5)) if value >= 0 else -int(math.floor(-value + 0.5))


def class_rng(seed: int, wnid: str, *tags: int) -> np.random.Generator:
    """Generator derived from (seed, wnid) so per-class draws are independent
    of iteration order; extra integer tags separate distinct uses."""
    digest = hashlib.sha256(wnid.encode("utf-8")).digest()
    wnid_key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed, wnid_key, *tags]))
