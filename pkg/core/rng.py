"""
Counter-based noise streams.

A draw is addressed by (seed, role, replica, member, step). The key of a
Philox generator is derived from (seed, role, replica, member) and the step
index is written into the counter, so the values of a draw never depend on the
order in which other draws were made.
"""
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np

ROLE_CODES: Dict[str, int] = {
    "truth": 1,
    "obs": 2,
    "perturb": 3,
    "init": 4,
    "corpus": 5,
    "ou": 6,
    "discrete": 7,
    "identities": 8,
}


@lru_cache(maxsize=4096)
def _philox_key(seed: int, role: int, replica: int, member: int) -> Tuple[int, int]:
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(role, replica, member))
    words = seq.generate_state(2, dtype=np.uint64)
    return int(words[0]), int(words[1])


class NoiseStreams:
    """Reproducible Gaussian increments keyed by role, member and step."""

    def __init__(self, seed: int, replica: int = 0):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self.replica = int(replica)

    @property
    def lineage(self) -> Tuple[int, int]:
        return (self.seed, self.replica)

    def generator(self, role: str, member: int = 0, step: int = 0) -> np.random.Generator:
        key = _philox_key(self.seed, ROLE_CODES[role], self.replica, int(member))
        counter = np.array([0, int(step), 0, 0], dtype=np.uint64)
        bitgen = np.random.Philox(key=np.array(key, dtype=np.uint64), counter=counter)
        return np.random.Generator(bitgen)

    def normal(self, role: str, member: int, step: int, size) -> np.ndarray:
        return self.generator(role, member, step).standard_normal(size)

    def increment(self, role: str, member: int, step: int, size: int, dt: float) -> np.ndarray:
        """Wiener increment over one step: N(0, dt I)."""
        return np.sqrt(dt) * self.normal(role, member, step, size)

    def for_replica(self, replica: int) -> "NoiseStreams":
        return NoiseStreams(self.seed, replica)

    def __repr__(self) -> str:
        return f"NoiseStreams(seed={self.seed}, replica={self.replica})"
