"""
Named, splittable random streams.

Every random decision in the bench (fault draws, planner error draws, corpus
generation) comes from a numpy Generator whose SeedSequence is keyed by the
run seed plus a tuple of names, so a decision never depends on how many
draws happened before it.
"""

import hashlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)) and part >= 0:
        return int(part)
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream_key(*parts):
    return tuple(_key_part(part) for part in parts)


def keyed_rng(seed: int, *key) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be >= 0")
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=stream_key(*key)))


def keyed_uniform(seed: int, *key) -> float:
    return float(keyed_rng(seed, *key).random())
