"""Deterministic, platform-independent random number generation.

A splitmix64 stream expands the user seed into the 256-bit state of a
xoshiro256** generator, which produces the sequential draws used for
sampling decisions (kernel sizes, crop offsets, flips).  Bulk array draws
(weight init, procedural textures) come from counter-mode splitmix64 so
they can be vectorized with numpy while staying bit-reproducible.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state once. Returns (new_state, output)."""
    state = (state + _GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _splitmix64_array(base: int, n: int) -> np.ndarray:
    """Vectorized splitmix64: outputs for states base+gamma, base+2*gamma, ..."""
    idx = np.arange(1, n + 1, dtype=np.uint64)
    z = np.uint64(base & _MASK64) + idx * np.uint64(_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** stream seeded via splitmix64 from a single 64-bit seed."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        s = self.seed
        state = []
        for _ in range(4):
            s, out = splitmix64(s)
            state.append(out)
        self._s = state
        self._bulk_key = None  # lazily derived; keeps scalar and bulk streams apart

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def randint(self, n: int) -> int:
        """Integer in [0, n) via Lemire's multiply-shift (no modulo bias scan)."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        return (self.next_u64() * n) >> 64

    def choice(self, options):
        return options[self.randint(len(options))]

    def coin(self) -> bool:
        return bool(self.next_u64() >> 63)

    def split(self, index: int) -> "Rng":
        """Child stream for worker `index`: splitmix64 of state xor index."""
        _, out = splitmix64((self._s[0] ^ (index & _MASK64)) & _MASK64)
        return Rng(out)

    # -- bulk (vectorized) draws -------------------------------------------

    def _next_bulk_base(self) -> int:
        # Each bulk request is keyed off one scalar draw so interleaving
        # bulk and scalar use never aliases.
        return self.next_u64()

    def bulk_u64(self, n: int) -> np.ndarray:
        return _splitmix64_array(self._next_bulk_base(), n)

    def bulk_uniform(self, n: int) -> np.ndarray:
        return (self.bulk_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def bulk_normal(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller on bulk uniforms."""
        m = (n + 1) // 2
        u1 = self.bulk_uniform(m)
        u2 = self.bulk_uniform(m)
        r = np.sqrt(-2.0 * np.log(1.0 - u1))
        theta = 2.0 * np.pi * u2
        out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return out[:n]

    def bulk_trunc_normal(self, n: int, std: float = 1.0, bound: float = 2.0) -> np.ndarray:
        """Normals rejected outside ±bound (in sigma units), scaled by std."""
        out = np.empty(n, dtype=np.float64)
        filled = 0
        while filled < n:
            draw = self.bulk_normal(max(n - filled, 16))
            keep = draw[np.abs(draw) <= bound]
            take = min(len(keep), n - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
        return out * std
