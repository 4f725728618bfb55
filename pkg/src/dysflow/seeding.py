"""Deterministic seed derivation.

Every random draw in the toolkit comes from a ``random.Random`` seeded
through here, so a single experiment seed fans out into independent,
process-stable streams (no ``hash()``, which is salted per process).
"""

from __future__ import annotations

import hashlib


def derive_seed(base: int, *path: int | str) -> int:
    """Derive a 64-bit child seed from a base seed and a label path."""
    payload = ":".join([str(base), *map(str, path)]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")
