"""Named, reproducible PRNG streams.

Every stochastic component draws from a stream identified by a master seed
plus a string name (and optionally an integer counter). Stream seeds are
derived with splitmix64 so that reruns match bit-for-bit across platforms,
and adding a new stream never perturbs existing ones.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One splitmix64 step; returns the next 64-bit output for `state`."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _hash_name(name: str) -> int:
    h = 0xCBF29CE484222325  # FNV-1a 64-bit
    for b in name.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


def stream_seed(master_seed: int, name: str, counter: int = 0) -> int:
    """Derive a 64-bit seed for stream `name` under `master_seed`."""
    s = splitmix64(master_seed & _MASK)
    s = splitmix64(s ^ _hash_name(name))
    s = splitmix64(s ^ (counter & _MASK))
    return s


def stream(master_seed: int, name: str, counter: int = 0) -> np.random.Generator:
    """A numpy Generator for the named stream; identical on every rerun."""
    return np.random.Generator(np.random.PCG64(stream_seed(master_seed, name, counter)))
