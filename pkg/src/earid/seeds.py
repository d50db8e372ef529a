"""Stable seed derivation shared by augmentation, training and the harness."""

from __future__ import annotations

import hashlib


def mix_seed(*parts: object) -> int:
    """Derive a 64-bit seed from the parts.

    blake2b over the colon-joined string forms, so results are stable across
    processes and platforms (unlike the builtin hash).
    """
    key = ":".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")
