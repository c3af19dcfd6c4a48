"""Seedable counter-based random streams.

All randomness in the simulator flows through Philox generators derived
from a master seed plus a tuple of stream tags, so every scenario draw,
noise stream, and payload draw is an independent substream that replays
bit-identically regardless of execution order or worker count.
"""
from __future__ import annotations

import hashlib

import numpy as np

_U64 = (1 << 64) - 1


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _U64
    if isinstance(tag, str):
        digest = hashlib.sha256(tag.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream tag must be int or str, got {type(tag).__name__}")


def substream(master_seed: int, *tags) -> np.random.Generator:
    """Independent Philox generator for (master_seed, *tags)."""
    key = tuple(_tag_to_int(t) for t in tags)
    seq = np.random.SeedSequence(entropy=int(master_seed) & _U64, spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))
