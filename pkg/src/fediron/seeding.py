"""Deterministic seed derivation for every randomized stage.

All child seeds come from numpy's SeedSequence so that per-client and
per-round streams are independent of execution order and of each other.
"""
from __future__ import annotations

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF


def derive_seed(*parts: int) -> int:
    """Fold integer components into one well-mixed 64-bit seed."""
    entropy = [int(p) & _MASK for p in parts]
    seq = np.random.SeedSequence(entropy)
    return int(seq.generate_state(1, dtype=np.uint64)[0])
