"""Seeded, counter-based random streams for deterministic simulation."""
from __future__ import annotations

import numpy as np

# Stream purposes, part of every stream key so draws for different uses never overlap
SPHERE = 0
REPRESENTATIVES = 1
INITIAL_STATE = 2


class SeededStreams:
    """
    Hands out one Philox stream per (purpose, cluster, agent) key.

    Each agent consumes a fixed number of draws per iteration from its own stream, so
    the draw at iteration t does not depend on the order agents are processed in.
    """

    def __init__(self, seed: int):
        self._seed = int(seed)
        self._streams: dict[tuple[int, ...], np.random.Generator] = {}

    @property
    def seed(self) -> int:
        return self._seed

    def stream(self, *key: int) -> np.random.Generator:
        if key not in self._streams:
            seq = np.random.SeedSequence(self._seed, spawn_key=tuple(int(k) for k in key))
            self._streams[key] = np.random.Generator(np.random.Philox(seq))
        return self._streams[key]
