"""Deterministic seed derivation.

Every random draw in the package goes through a fresh numpy Generator
seeded via `derive_seed`, so no global RNG state exists and identical
inputs reproduce identical streams in any process or thread.
"""

import hashlib

_MASK64 = (1 << 64) - 1


def derive_seed(root: int, *parts) -> int:
    """root ^ sha256("p0/p1/...")[:8], as a 64-bit unsigned int.

    `parts` are stringified, so layer indices, module labels and tensor
    names can be mixed freely.
    """
    tag = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return (int(root) ^ int.from_bytes(digest[:8], "little")) & _MASK64
