"""Per-purpose sub-seeds derived from one master seed.

``derive_seed(master, "pool", 2)`` hashes the master seed and the labels with
SHA-256 and keeps the low 32 bits, so sub-seeds are stable across platforms
and Python versions and independent of call order.
"""
import hashlib


def derive_seed(master: int, *labels) -> int:
    key = ":".join([str(int(master))] + [str(label) for label in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")
