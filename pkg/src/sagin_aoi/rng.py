"""Keyed random streams.

A stream is identified by ``(seed, purpose, *keys)``; the same identifier always
yields the same draws, independent of the order in which streams are created.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    PLACEMENT = 1
    G2A_CHANNEL = 2
    A2S_CHANNEL = 3
    ARRIVALS = 4
    SOLAR = 5
    GUMBEL = 6
    GML_NOISE = 7
    POLICY = 8
    TRAINING = 9
    PILOT = 10


@dataclass(frozen=True)
class RngStream:
    seed: int
    purpose: int
    keys: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1),
                                    spawn_key=(int(self.purpose),) + tuple(int(k) for k in self.keys))
        return np.random.Generator(np.random.PCG64(ss))


def stream(seed: int, purpose: int, *keys: int) -> np.random.Generator:
    """Shorthand for ``RngStream(seed, purpose, keys).generator()``."""
    return RngStream(seed, purpose, tuple(keys)).generator()
