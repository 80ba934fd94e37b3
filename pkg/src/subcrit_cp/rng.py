"""Deterministic, splittable random streams.

Every stochastic task derives its generator from a master seed and a task
path string (for example ``"growth/t=20/chunk=3"``).  Adding new tasks never
changes the streams of existing ones because the path, not a call order,
selects the stream.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _path_words(path: str) -> tuple[int, ...]:
    digest = hashlib.sha256(path.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[4 * k:4 * k + 4], "little") for k in range(4))


def task_seed_sequence(seed: int, path: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=_path_words(path))


def task_rng(seed: int, path: str) -> np.random.Generator:
    """PCG64 generator for the task named ``path`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(task_seed_sequence(seed, path)))


def site_rng(seed: int, site_key: tuple[int, ...], tag: str = "site") -> np.random.Generator:
    """Counter-based (Philox) stream owned by one lattice site.

    The stream is a pure function of ``(seed, tag, site_key)``, so the events
    drawn for a site do not depend on which query first asked for them.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_path_words(tag) + tuple(site_key))
    return np.random.Generator(np.random.Philox(ss))
