"""Deterministic random streams derived from one master seed.

Every consumer asks for a *named* substream (``"circuit"``, ``"settings"``,
``"shots:ionq"`` ...) so that stages can be re-run independently and still
reproduce the same numbers.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream_seed(master: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master), spawn_key=(_name_key(name),))


def substream(master: int, name: str) -> np.random.Generator:
    """Generator for the named substream of ``master``."""
    return np.random.default_rng(substream_seed(master, name))


def spawn_generators(seed, count: int) -> list[np.random.Generator]:
    """Split ``seed`` into ``count`` independent per-task generators.

    ``seed`` may be an int, a SeedSequence or a Generator. The split depends
    only on the seed and the task index, never on how tasks are scheduled.
    """
    if isinstance(seed, np.random.Generator):
        # one draw from the parent, so successive splits of a generator differ
        seq = np.random.SeedSequence(int(seed.integers(2**63)))
    elif isinstance(seed, np.random.SeedSequence):
        seq = seed
    else:
        seq = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in seq.spawn(count)]
