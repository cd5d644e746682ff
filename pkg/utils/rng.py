"""Seeded random streams for reproducible simulation.

Algorithm: ``numpy.random.Generator(PCG64(SeedSequence(entropy=seed, spawn_key=key)))``
where ``key = (label_key, *indices)`` and ``label_key`` is the first 8 bytes of the
SHA-256 digest of the UTF-8 label, read big-endian. Any implementation that
reproduces numpy's SeedSequence and PCG64 reproduces every stream.
"""
import hashlib
from typing import Tuple

import numpy as np


def label_key(label: str) -> int:
    """Stable 64-bit integer for a stream label."""
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "big")


def seeded_rng(seed: int, stream: str, *indices: int) -> np.random.Generator:
    """
    Independent generator for (seed, stream label, indices).

    Args:
        seed: Experiment seed (non-negative, < 2**64)
        stream: Stream label, e.g. "bootstrap" or "noise"
        indices: Optional replication/sub-stream indices

    Returns:
        numpy Generator backed by PCG64
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key: Tuple[int, ...] = (label_key(stream),) + tuple(int(i) for i in indices)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=key)))
