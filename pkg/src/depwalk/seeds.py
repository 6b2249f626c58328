"""Deterministic seed derivation.

Every stage draws its randomness from a child seed derived from the single
master seed, so one flag reproduces a whole pipeline run.  ``hash()`` is
salted per process and must never be used for this.
"""

import hashlib


def derive_seed(master: int, label: str) -> int:
    """64-bit child seed: first eight bytes of SHA-256 over ``"master:label"``."""
    digest = hashlib.sha256(f"{master}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
