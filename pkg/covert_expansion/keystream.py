"""
Counter-mode keystream used to expand a short shared seed.

Blocks are SHA-256 digests of (seed length, seed, label, counter). This is a
deterministic stand-in for a PRNG, not a vetted stream cipher: sessions take
the PRNG's distinguishing advantage as a caller-supplied parameter instead of
estimating it.
"""

import hashlib
from typing import Sequence

import numpy as np

from .analytic import DomainError

DIGEST_BITS = 256

SCHEDULE_LABEL = "schedule"
PAD_LABEL = "pad"


def _seed_prefix(seed: np.ndarray) -> bytes:
    # Bit length first, so seeds differing only in trailing zeros stay distinct
    return len(seed).to_bytes(8, "big") + np.packbits(seed).tobytes()


def keystream(seed: Sequence[int], length: int, label: str = SCHEDULE_LABEL) -> np.ndarray:
    """Expand ``seed`` into ``length`` bits. Distinct labels give independent streams."""
    bits = np.asarray(seed, dtype=np.uint8)
    if bits.size == 0:
        raise DomainError("keystream seed must be nonempty")
    if np.any(bits > 1):
        raise DomainError("keystream seed must be a bit string")
    if length < 0:
        raise DomainError(f"length must be nonnegative, got {length}")
    if length == 0:
        return np.zeros(0, dtype=np.uint8)

    prefix = _seed_prefix(bits) + label.encode() + b"\x00"
    blocks = -(-length // DIGEST_BITS)
    digest = b"".join(
        hashlib.sha256(prefix + counter.to_bytes(8, "big")).digest() for counter in range(blocks)
    )
    return np.unpackbits(np.frombuffer(digest, dtype=np.uint8))[:length]
