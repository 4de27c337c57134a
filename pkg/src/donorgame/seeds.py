"""Keyed derivation of independent random streams from one master seed.

Every source of randomness in a run (schedule bipartition, scripted
mutation, strategy jitter, retry jitter, mock responses) draws from its
own stream, keyed by a label plus position. Enabling or disabling one
feature therefore never shifts the draws of another, and resumed runs
re-derive identical streams without replaying state.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(master_seed: int, *parts) -> int:
    key = "|".join([str(master_seed), *[str(p) for p in parts]])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(master_seed: int, *parts) -> random.Random:
    return random.Random(derive_seed(master_seed, *parts))
