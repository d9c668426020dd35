"""Deterministic pseudo-random number generation.

The generator is a counter-based splitmix64: output ``i`` (zero-based) of a
stream seeded with ``s`` is ``mix64(s + GAMMA * (i + 1))`` where

    GAMMA = 0x9E3779B97F4A7C15
    mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
              z ^= z >> 27; z *= 0x94D049BB133111EB
              z ^= z >> 31

all in 64-bit wrapping arithmetic.  Uniform doubles take the top 53 bits
(``out >> 11``) scaled by 2^-53; normals come from Box-Muller on consecutive
uniform pairs.  Because outputs are a pure function of (seed, counter) the
full state is two integers, which is what checkpoints persist.

Sub-streams are derived with ``spawn``: the child seed is
``mix64(seed ^ fnv1a64(key))``, so per-sample streams are independent of
draw order.
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_U64 = np.uint64
_MASK = 0xFFFFFFFFFFFFFFFF


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
        return z ^ (z >> _U64(31))


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


class SplitMix64:
    """Seeded counter-based splitmix64 stream (see module docstring)."""

    def __init__(self, seed: int, counter: int = 0):
        self.seed = seed & _MASK
        self.counter = counter

    @property
    def state(self) -> tuple[int, int]:
        return (self.seed, self.counter)

    def set_state(self, state: tuple[int, int]) -> None:
        self.seed = state[0] & _MASK
        self.counter = int(state[1])

    def spawn(self, key: str) -> "SplitMix64":
        child = int(_mix64(_U64((self.seed ^ fnv1a64(key.encode())) & _MASK)))
        return SplitMix64(child)

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix64(_U64(self.seed) + _U64(GAMMA) * idx)

    def uniform(self, shape=(), lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        u = (self.next_u64(n) >> _U64(11)).astype(np.float64) * 2.0**-53
        u = lo + (hi - lo) * u
        return u.reshape(shape) if shape else float(u[0])

    def normal(self, shape=(), mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        z = self.next_u64(2 * pairs)
        # u1 in (0, 1] so the log is finite
        u1 = ((z[:pairs] >> _U64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (z[pairs:] >> _U64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        out = mean + std * out
        return out.reshape(shape) if shape else float(out[0])

    def randint(self, n: int) -> int:
        # modulo bias is negligible for the small n used here
        return int(self.next_u64(1)[0] % np.uint64(n))

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
