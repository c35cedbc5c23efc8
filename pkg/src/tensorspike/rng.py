"""Keyed counter-based random streams.

Each stream is a Philox generator seeded by ``SeedSequence([seed, purpose,
block])``.  Large arrays are filled block by block with a fixed block size, so
the values never depend on thread count or evaluation order.
"""

from __future__ import annotations

import numpy as np

BLOCK = 1 << 20

# purpose keys
SIGNAL = 1
NOISE = 2
AMP_INIT = 3
MC_INTEGRATOR = 4
CHANNEL_MC = 5
ORACLE = 6


def generator(seed: int, purpose: int, block: int = 0) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), purpose, block])))


def fill_blocks(out: np.ndarray, seed: int, purpose: int, draw) -> None:
    """Fill a flat array block by block with ``draw(rng, size)``."""
    total = out.shape[0]
    for b, start in enumerate(range(0, total, BLOCK)):
        stop = min(start + BLOCK, total)
        out[start:stop] = draw(generator(seed, purpose, b), stop - start)


def add_normal_blocks(out: np.ndarray, scale: float, seed: int, purpose: int = NOISE) -> None:
    """In place ``out += scale * N(0, 1)`` with keyed blocks."""
    total = out.shape[0]
    buf = np.empty(min(BLOCK, total))
    for b, start in enumerate(range(0, total, BLOCK)):
        stop = min(start + BLOCK, total)
        view = buf[: stop - start]
        generator(seed, purpose, b).standard_normal(out=view)
        view *= scale
        out[start:stop] += view
