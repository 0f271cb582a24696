"""Counter-keyed random substreams.

A stream is identified by (seed, stage, sub-stage, block). Shots are cut into
blocks of fixed size, so the variates a given shot sees never depend on how
many workers generated the data.
"""

from enum import IntEnum
from typing import Iterator, Tuple

import numpy as np

BLOCK_SIZE = 65_536


class Stage(IntEnum):
    RUN_I = 1
    RUN_II = 2
    QUTRIT = 3
    BOOTSTRAP = 4
    SWEEP = 5


def substream(seed: int, stage: Stage, sub: int = 0, block: int = 0) -> np.random.Generator:
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(int(stage), int(sub), int(block)))
    return np.random.Generator(np.random.Philox(sequence))


def blocks(n: int, block_size: int = BLOCK_SIZE) -> Iterator[Tuple[int, int, int]]:
    """Yield (block index, start, stop) covering range(n)"""
    for index, start in enumerate(range(0, n, block_size)):
        yield index, start, min(start + block_size, n)


def derive_seed(seed: int, *key: int) -> int:
    """Child seed for a keyed sub-task, e.g. (sweep point, repetition)"""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(int(Stage.SWEEP),) + tuple(int(k) for k in key))
    low, high = sequence.generate_state(2, dtype=np.uint32)
    return (int(high) << 31) ^ int(low)
