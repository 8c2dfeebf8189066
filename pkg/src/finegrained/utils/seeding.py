"""Deterministic generator derivation from a master seed and string labels."""

import zlib

import numpy as np


def label_key(label: str | int) -> int:
    """Map a derivation label to a stable 32-bit key.

    Args:
        label: String label (hashed with CRC32) or non-negative integer (used as is)

    Returns:
        int: Spawn-key component
    """
    if isinstance(label, int):
        return label
    return zlib.crc32(label.encode("utf-8"))


def derive_seed_sequence(seed: int, *labels: str | int) -> np.random.SeedSequence:
    """Build the seed sequence for one named stream below a master seed.

    Args:
        seed: Master seed
        *labels: Derivation path, for example ("chain", "f", 3)

    Returns:
        np.random.SeedSequence: Independent, reproducible seed sequence
    """
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(label_key(label) for label in labels))


def derive_rng(seed: int, *labels: str | int) -> np.random.Generator:
    """Build a generator for one named stream below a master seed.

    Args:
        seed: Master seed
        *labels: Derivation path

    Returns:
        np.random.Generator: PCG64 generator
    """
    return np.random.default_rng(derive_seed_sequence(seed, *labels))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a fresh 63-bit seed from a generator (recorded in audit logs).

    Args:
        rng: Parent generator

    Returns:
        int: Seed usable with np.random.default_rng
    """
    return int(rng.integers(0, 2**63 - 1))
