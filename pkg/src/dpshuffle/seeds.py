"""Deterministic derivation of random generators from a single root seed.

Every random draw in the library comes from a generator derived here: the
root seed plus a short path of labels and indices is hashed into entropy
for an independent stream.  Two consequences matter for the rest of the
code:

* reruns with the same root seed reproduce every draw bit for bit, and
* streams are independent of scheduling, so work can be reordered or
  parallelised without changing results.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

PathPart = int | str


def _canonical_payload(root: int, path: tuple[PathPart, ...]) -> bytes:
    for part in path:
        if not isinstance(part, (int, str)) or isinstance(part, bool):
            raise TypeError(f"seed path parts must be int or str, got {part!r}")
    if not isinstance(root, int) or isinstance(root, bool):
        raise TypeError(f"root seed must be an int, got {root!r}")
    return json.dumps([root, *path], separators=(",", ":")).encode("utf-8")


def derive_entropy(root: int, *path: PathPart) -> int:
    """Hash (root, *path) into a 256-bit integer."""
    digest = hashlib.sha256(_canonical_payload(root, path)).digest()
    return int.from_bytes(digest, "big")


def derive_seed(root: int, *path: PathPart) -> int:
    """Derive a compact 64-bit child seed, suitable as a new root."""
    return derive_entropy(root, *path) >> 192


def derive_rng(root: int, *path: PathPart) -> np.random.Generator:
    """Return an independent generator for the stream named by ``path``."""
    return np.random.default_rng(np.random.SeedSequence(derive_entropy(root, *path)))
