"""Per-(generation, population) random streams.

Every random draw of the workload comes from a stream derived from
``(master_seed, g, i, purpose)``, so results do not depend on thread timing or
on how many draws another population made.
"""

from __future__ import annotations

from enum import IntEnum
from threading import Lock
from typing import Dict, Tuple

import numpy as np

MAX_SEED = 2**64 - 1


class Purpose(IntEnum):
    INIT = 0
    DE = 1
    SAMPLE = 2
    SUBSPACE = 3
    SCHEDULE = 4


StreamKey = Tuple[int, int, Purpose]


def stream_seed(master_seed: int, generation: int, population: int, purpose: Purpose) -> np.random.SeedSequence:
    if not 0 <= master_seed <= MAX_SEED:
        raise ValueError("master_seed must be an unsigned 64-bit integer")
    if generation < 0 or population < 0:
        raise ValueError("generation and population must be non-negative")
    return np.random.SeedSequence([master_seed, generation, population, int(purpose)])


class StreamFactory:
    """Hand out each (g, i, purpose) stream exactly once.

    Handing the same key out twice would correlate draws that are meant to be
    independent, so it is treated as a programming error.
    """

    def __init__(self, master_seed: int) -> None:
        self._master_seed = master_seed
        self._issued: Dict[StreamKey, np.random.SeedSequence] = {}
        self._lock = Lock()

    @property
    def master_seed(self) -> int:
        return self._master_seed

    def seed(self, generation: int, population: int, purpose: Purpose) -> np.random.SeedSequence:
        key = (generation, population, Purpose(purpose))
        with self._lock:
            if key in self._issued:
                raise RuntimeError(f"random stream {key} requested twice")
            sequence = stream_seed(self._master_seed, generation, population, key[2])
            self._issued[key] = sequence
            return sequence

    def generator(self, generation: int, population: int, purpose: Purpose) -> np.random.Generator:
        return np.random.default_rng(self.seed(generation, population, purpose))

    def issued(self) -> int:
        with self._lock:
            return len(self._issued)
