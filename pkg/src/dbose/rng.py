"""Counter-based random streams keyed by (seed, path index, channel).

Every path owns one independent Philox stream per noise channel, so draws
are bit-reproducible regardless of block size, worker count, or scheduling
order.  Channels 0..7 are reserved for the distinguished pair; free
particles use 8 + particle index.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox

CH_RADIAL = 0
CH_ANGULAR = 1
CH_RESTART = 2
CH_COM = 3
CH_START = 4          # initial-condition draws (rejection sampling)
CH_BRIDGE = 5         # gate-crossing bridge thinning
CH_HIT = 6            # exact hitting-time quantile draws
_CH_FREE_BASE = 8


def free_channel(particle_index: int) -> int:
    """Channel id of the free particle with the given 1-based index."""
    return _CH_FREE_BASE + particle_index


def stream(seed: int, path_index: int, channel: int) -> Generator:
    """The keyed Philox stream for one (path, channel) pair."""
    key = np.array([np.uint64(seed), np.uint64(path_index) * np.uint64(1 << 20)
                    + np.uint64(channel)], dtype=np.uint64)
    return Generator(Philox(key=key))


def normal_block(seed: int, first_path: int, n_paths: int, channel: int,
                 n_steps: int, scale: float) -> np.ndarray:
    """(n_paths, n_steps) of N(0, scale^2) draws, one stream per path."""
    out = np.empty((n_paths, n_steps))
    for i in range(n_paths):
        out[i] = stream(seed, first_path + i, channel).standard_normal(n_steps)
    out *= scale
    return out


def complex_normal_block(seed: int, first_path: int, n_paths: int,
                         channel: int, n_steps: int, scale: float) -> np.ndarray:
    """(n_paths, n_steps) complex draws, each component N(0, scale^2)."""
    out = np.empty((n_paths, n_steps), dtype=complex)
    for i in range(n_paths):
        flat = stream(seed, first_path + i, channel).standard_normal(2 * n_steps)
        out[i] = flat[0::2] + 1j * flat[1::2]
    out *= scale
    return out


def uniform_block(seed: int, first_path: int, n_paths: int, channel: int,
                  n_draws: int) -> np.ndarray:
    """(n_paths, n_draws) of Uniform[0,1) draws, one stream per path."""
    out = np.empty((n_paths, n_draws))
    for i in range(n_paths):
        out[i] = stream(seed, first_path + i, channel).random(n_draws)
    return out
