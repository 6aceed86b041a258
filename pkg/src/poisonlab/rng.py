"""Keyed substreams over a counter-based generator.

Every random draw in the package goes through :func:`substream`, which maps
``(seed, *labels)`` to an independent Philox stream. The key is a SHA-256
digest of the canonical label tuple, so streams never depend on call order.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

SUPPORTED_GENERATORS = ("philox",)


def derive_key(seed: int, *labels: object) -> int:
    """128-bit key for ``(seed, *labels)``.

    Labels are rendered with ``repr`` and joined with a unit separator so
    ``("a", 1)`` and ``("a1",)`` cannot collide.
    """
    parts = [struct.pack("<q", int(seed))]
    parts.extend(repr(label).encode("utf-8") for label in labels)
    digest = hashlib.sha256(b"\x1f".join(parts)).digest()
    return int.from_bytes(digest[:16], "little")


def derive_seed(seed: int, *labels: object) -> int:
    """Non-negative 63-bit integer seed, for handing to nested operations."""
    return derive_key(seed, *labels) & ((1 << 63) - 1)


def substream(seed: int, *labels: object, generator: str = "philox") -> np.random.Generator:
    if generator not in SUPPORTED_GENERATORS:
        raise ValueError(f"unknown generator {generator!r}; supported: {SUPPORTED_GENERATORS}")
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *labels)))
