"""Counter-based random streams keyed by (master seed, instance, iteration, ant).

Every ant draws from its own Philox stream whose key is derived from the
tuple above, so results never depend on which worker ran the ant or in what
order. Within a stream order ``k`` always consumes positions ``2k`` (the
exploit/explore coin) and ``2k + 1`` (the roulette spin).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DRAWS_PER_ORDER = 2


def derive_key(master_seed: int, *path: int) -> np.ndarray:
    """128-bit Philox key for the substream addressed by ``path``."""
    seq = np.random.SeedSequence(int(master_seed) & (2**64 - 1),
                                 spawn_key=tuple(int(p) for p in path))
    return seq.generate_state(2, dtype=np.uint64)


def generator(master_seed: int, *path: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_key(master_seed, *path)))


@dataclass(frozen=True)
class AntStream:
    master_seed: int
    instance: int
    iteration: int
    ant: int

    def draws(self, n_orders: int, attempt: int = 0) -> np.ndarray:
        """``(n_orders, 2)`` uniforms in [0, 1); ``attempt`` selects a fresh substream."""
        rng = generator(self.master_seed, self.instance, self.iteration, self.ant, attempt)
        return rng.random((n_orders, DRAWS_PER_ORDER))

    @property
    def trace(self) -> tuple[int, int, int, int]:
        return (self.master_seed, self.instance, self.iteration, self.ant)


def cell_seed(master_seed: int, *path: int) -> int:
    """Independent 63-bit seed for an experiment cell."""
    seq = np.random.SeedSequence(int(master_seed) & (2**64 - 1),
                                 spawn_key=tuple(int(p) for p in path))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
