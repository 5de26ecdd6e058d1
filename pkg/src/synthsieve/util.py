"""Seed derivation and small shared helpers."""

import hashlib

import numpy as np


def derive_seed(*parts):
    """Stable 63-bit seed from a tuple of parts (ints/strings).

    Hash-based so that streams for different purposes (per-sample, per-epoch,
    per-tree) never collide or correlate, and stable across platforms and
    library versions.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def rng_for(*parts):
    """Deterministic generator for a derivation path."""
    return np.random.default_rng(derive_seed(*parts))


def batched(indices, size):
    """Yield successive slices of an index array."""
    for start in range(0, len(indices), size):
        yield indices[start:start + size]
