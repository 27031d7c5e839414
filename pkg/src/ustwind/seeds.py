"""Deterministic 64-bit seed splitting for parallel and serial streams.

Stream i of a master seed is ``mix_seed(master, i)``: the splitmix64
finalizer applied to master + (i + 1) * GOLDEN.  Serial loops and parallel
workers that use the same (master, stream) pairs therefore draw identical
randomness, which is the reproducibility contract of the CLI.
"""

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def mix_seed(master: int, stream: int) -> int:
    """splitmix64 finalizer of master + (stream+1)*golden-ratio constant."""
    z = (int(master) + (int(stream) + 1) * _GOLDEN) & _MASK
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return z


def stream_generator(master: int, stream: int) -> np.random.Generator:
    """Independent numpy generator for the given stream of a master seed."""
    return np.random.Generator(np.random.PCG64(mix_seed(master, stream)))


def kernel_seed(rng: np.random.Generator) -> int:
    """32-bit seed for a numba kernel, drawn from (and advancing) rng."""
    return int(rng.integers(0, 2**32 - 1))
