"""Deterministic seed derivation.

Every random draw in the package flows from a single root seed through
`child_seed`, a counter-free splitter: the child is a SHA-256 hash of the
root seed plus a label path. Children are independent of evaluation order,
so pipelines stay byte-reproducible even when stages are reordered or
parallelized per item.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(root: int, *labels: object) -> int:
    """Derive a stable 63-bit child seed from a root seed and a label path.

    Labels may be strings or ints; they are joined into a canonical byte
    string so ("clip", 5) and ("clip5",) give different children.
    """
    h = hashlib.sha256()
    h.update(str(int(root)).encode("ascii"))
    for lab in labels:
        h.update(b"\x1f")
        h.update(repr(lab).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def np_rng(root: int, *labels: object) -> np.random.Generator:
    """NumPy generator seeded from the derived child seed."""
    return np.random.default_rng(child_seed(root, *labels))
