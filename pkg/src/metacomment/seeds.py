"""Deterministic sub-seed derivation from one master seed."""

import hashlib


def derive_seed(master: int, purpose) -> int:
    """Stable 63-bit seed for a named purpose (fold index, grid point, ...).

    Serial and parallel execution derive identical seeds, so results do not
    depend on scheduling.
    """
    digest = hashlib.sha256(f"{master}:{purpose}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
