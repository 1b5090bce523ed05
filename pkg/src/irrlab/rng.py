"""Label-addressed random streams.

Every stream is keyed by (root, path index, coordinate index, purpose) so
samples never depend on the order in which workers draw them.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Seed:
    root: int = 0
    path: int = 0
    coord: int = 0

    def __post_init__(self):
        if not (0 <= int(self.root) < 2**64):
            raise ValueError("seed root must be an unsigned 64-bit integer")

    def child(self, path=None, coord=None):
        return Seed(self.root, self.path if path is None else path,
                    self.coord if coord is None else coord)


def stream(seed, *extra):
    """Philox generator for the stream addressed by ``seed`` and extra labels."""
    ss = np.random.SeedSequence(int(seed.root),
                                spawn_key=(int(seed.path), int(seed.coord)) + tuple(int(e) for e in extra))
    return np.random.Generator(np.random.Philox(ss))
