"""Deterministic seed derivation from structured keys."""

from __future__ import annotations

import numpy as np


def derive_seed(*keys: int) -> int:
    """A 32-bit seed that depends only on ``keys``, never on call order."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])
