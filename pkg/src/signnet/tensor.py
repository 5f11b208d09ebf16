"""Tensor carriers, deterministic reduction kernels, and the seeded PRNG.

Tensors are C-contiguous numpy arrays (float32 for training, float64 for
gradient checking).  In deterministic mode every reduction runs in a fixed
sequential order so that repeated runs, and comparisons against naive loop
oracles, are bit-exact.  The non-deterministic path hands the same
contractions to BLAS, which may reorder partial sums.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError

Tensor = np.ndarray

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
# 53-bit mantissa scaling for uniform doubles in [0, 1)
_INV53 = 2.0 ** -53

_deterministic = True


def set_deterministic(flag: bool) -> None:
    global _deterministic
    _deterministic = bool(flag)


def is_deterministic() -> bool:
    return _deterministic


class Prng:
    """SplitMix64 stream; the single source of randomness in the toolkit.

    The scalar and block paths advance the same state sequence, so mixing
    them never changes which value the stream yields next.
    """

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def _block_u64(self, n: int) -> np.ndarray:
        # Vectorised SplitMix64: states are an arithmetic sequence mod 2^64.
        steps = np.arange(1, n + 1, dtype=np.uint64)
        states = np.uint64(self._state) + np.uint64(_GAMMA) * steps
        self._state = (self._state + n * _GAMMA) & _MASK64
        z = states
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return (self.next_u64() >> 11) * _INV53

    def uniform_block(self, n: int) -> np.ndarray:
        """n doubles in [0, 1), consuming n stream values."""
        return ((self._block_u64(n) >> np.uint64(11))).astype(np.float64) * _INV53

    def below(self, bound: int) -> int:
        """Integer in [0, bound)."""
        if bound <= 0:
            raise ParameterError(f"bound must be positive, got {bound}")
        return self.next_u64() % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def gaussian(self, n: int, mean: float = 0.0, stddev: float = 1.0) -> Tensor:
        """n Box-Muller normal draws; exactly two stream values per pair."""
        if n < 0:
            raise ParameterError(f"sample count must be >= 0, got {n}")
        if stddev < 0:
            raise ParameterError(f"stddev must be >= 0, got {stddev}")
        if n == 0:
            return np.zeros(0, dtype=np.float64)
        pairs = (n + 1) // 2
        raw = self._block_u64(2 * pairs)
        # u1 in (0, 1] so the log is finite; u2 in [0, 1)
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _INV53
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        return out[:n] * stddev + mean


def rng_gaussian(rng: Prng, n: int, mean: float = 0.0, stddev: float = 1.0) -> Tensor:
    return rng.gaussian(n, mean, stddev)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """[m,k] @ [k,n].

    Deterministic mode accumulates over k in ascending order, one rounded
    multiply and add per term, which is the same float op sequence as the
    naive triple loop.
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    if not _deterministic:
        return a @ b
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.result_type(a.dtype, b.dtype))
    for p in range(k):
        out += a[:, p, None] * b[p, :]
    return out


def map_elementwise(op, a: Tensor, b: Tensor) -> Tensor:
    """Apply a binary op elementwise.  Only scalar operands broadcast."""
    a_arr = np.asarray(a)
    b_arr = np.asarray(b)
    if a_arr.ndim != 0 and b_arr.ndim != 0 and a_arr.shape != b_arr.shape:
        raise ShapeError(f"elementwise shapes differ: {a_arr.shape} vs {b_arr.shape}")
    return op(a_arr, b_arr)
