"""Named random substreams derived from a single run seed.

Every random consumer in a pipeline draws from its own named substream, so
adding a new consumer (or reordering existing ones) never perturbs the draws
of the others.  Names are hashed into a ``SeedSequence`` spawn key, which
keeps the derivation stable across processes and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_words(name: object) -> tuple[int, ...]:
    if isinstance(name, (int, np.integer)):
        value = int(name)
        if value < 0:
            raise ValueError(f"substream index must be non-negative, got {value}")
        return (value & 0xFFFFFFFF, (value >> 32) & 0xFFFFFFFF)
    digest = hashlib.blake2b(str(name).encode("utf-8"), digest_size=8).digest()
    return (
        int.from_bytes(digest[:4], "little"),
        int.from_bytes(digest[4:], "little"),
    )


def seed_sequence(seed: int, *names: object) -> np.random.SeedSequence:
    key: list[int] = []
    for name in names:
        key.extend(_key_words(name))
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))


def substream(seed: int, *names: object) -> np.random.Generator:
    """Generator for the substream identified by ``names`` under ``seed``."""
    return np.random.default_rng(seed_sequence(seed, *names))


def child_seed(seed: int, *names: object) -> int:
    """Collapse a named substream into a single integer seed."""
    return int(seed_sequence(seed, *names).generate_state(1, np.uint64)[0])
