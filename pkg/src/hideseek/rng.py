"""Counter-based per-environment random streams.

Every environment owns a single 64-bit counter state. A draw advances the
counter by a fixed odd gamma and hashes it (splitmix64 finalizer), so the
stream is a pure function of (seed, draw index) — no hidden state, identical
results from any thread, and cheap to embed in the numba kernels.

The draw *order* is part of the engine contract: the dynamics step and reset
consume draws in a fixed documented sequence, and the naive reference
implementation replays the exact same sequence. All float outputs are
float32, produced the same way here (numpy scalars) and in the kernels.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15

_F2POW24 = np.float32(1.0 / (1 << 24))
_F2POW23 = np.float32(1.0 / (1 << 23))
_F1 = np.float32(1.0)


def mix64(z: int) -> int:
    """splitmix64 finalizer (Steele et al. fast-splittable-PRNG mixing)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def stream_seed(global_seed: int, env_index: int) -> int:
    """Initial counter for environment env_index under a global seed."""
    return mix64((global_seed & MASK64) ^ mix64((env_index * GAMMA + GAMMA) & MASK64))


class Stream:
    """Pure-Python stream, bit-compatible with the kernel-side draws."""

    __slots__ = ("state",)

    def __init__(self, global_seed: int, env_index: int = 0, *, raw_state: int | None = None):
        self.state = raw_state if raw_state is not None else stream_seed(global_seed, env_index)

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def uniform(self) -> np.float32:
        """float32 in [0, 1), 24 bits of entropy."""
        return np.float32(np.float32(self.next_u64() >> 40) * _F2POW24)

    def uniform_pm1(self) -> np.float32:
        """float32 in [-1, 1)."""
        return np.float32(np.float32(self.next_u64() >> 40) * _F2POW23 - _F1)

    def randint(self, n: int) -> int:
        """Integer in [0, n). Requires n <= 2**24."""
        return ((self.next_u64() >> 40) * n) >> 24

    def bernoulli(self, p: np.float32) -> bool:
        return bool(self.uniform() < np.float32(p))
