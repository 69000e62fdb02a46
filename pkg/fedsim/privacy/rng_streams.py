"""
Deterministic random streams keyed by (seed, round, collaborator).

The collaborator id is hashed with SHA-256 rather than Python's ``hash`` so the
derivation is identical across processes and interpreter runs.
"""

from __future__ import annotations

import hashlib

import numpy as np

SEED_LIMIT = 2**64

# Keeps noise streams and cohort-sampling streams apart even when they share a seed.
NOISE_DOMAIN = 0x6E6F697365
COHORT_DOMAIN = 0x636F686F7274


def _id_words(collaborator_id: str) -> list[int]:
    digest = hashlib.sha256(collaborator_id.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, len(digest), 4)]


def _check(round_num: int, seed: int) -> None:
    if round_num < 0:
        raise ValueError(f"round must be >= 0, got {round_num}")
    if not 0 <= seed < SEED_LIMIT:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")


def stream_id(round_num: int, collaborator_id: str, seed: int) -> str:
    """Short printable key naming the stream ``rng_stream_for`` returns for the same triple."""
    _check(round_num, seed)
    return hashlib.sha256(f"{seed}/{round_num}/{collaborator_id}".encode("utf-8")).hexdigest()[:16]


def rng_stream_for(round_num: int, collaborator_id: str, seed: int) -> np.random.Generator:
    _check(round_num, seed)
    seq = np.random.SeedSequence(entropy=[seed, NOISE_DOMAIN, round_num, *_id_words(collaborator_id)])
    return np.random.Generator(np.random.PCG64(seq))


def cohort_stream_for(round_num: int, seed: int) -> np.random.Generator:
    _check(round_num, seed)
    seq = np.random.SeedSequence(entropy=[seed, COHORT_DOMAIN, round_num])
    return np.random.Generator(np.random.PCG64(seq))
