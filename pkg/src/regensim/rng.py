"""Seed derivation and buffered draw streams.

Every random ingredient of a run gets its own generator, derived from the
master seed and the key ``(replication, class, purpose)`` through
``numpy.random.SeedSequence(master, spawn_key=key)``. The key is a plain
integer tuple, so any implementation using the same SeedSequence scheme
reproduces the same substreams.
"""

from __future__ import annotations

import itertools
from enum import IntEnum

import numpy as np

BLOCK = 4096


class Purpose(IntEnum):
    MIXTURE = 0
    E = 1
    Z = 2
    RESIDUAL = 3
    SERVICE = 4
    ROUTING = 5
    INIT = 6
    LADDER = 7
    ARRIVAL = 8


def substream(seed: int, replication: int, cls: int, purpose: Purpose) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(int(replication), int(cls), int(purpose)))
    return np.random.Generator(np.random.PCG64(ss))


def buffered(block_fn, block: int = BLOCK):
    """Iterator over ``block_fn(block)`` results, refilled on demand.

    ``block_fn`` must return a list; ``next()`` on the returned iterator is a
    C-level call, which matters inside the event loop.
    """
    return itertools.chain.from_iterable(iter(lambda: block_fn(block), None))
