"""Dense matrix kernel and seeded randomness shared by every protocol.

Matrices are plain ``float64`` numpy arrays.  The products used by the
protocols go through :func:`matmul`, which fixes the summation order so that
distributed and centralized runs round the same way wherever their inputs
coincide.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


def as_matrix(a, *, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a finite 2-D float64 array (a copy is not forced)."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or Inf")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with a fixed left-to-right accumulation order.

    Entry ``(i, j)`` is accumulated as ``((0 + a[i,0]b[0,j]) + a[i,1]b[1,j]) + ...``,
    the same order as the textbook triple loop.  Vectors are promoted the
    way ``numpy.matmul`` promotes them.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    squeeze_row = a.ndim == 1
    squeeze_col = b.ndim == 1
    if squeeze_row:
        a = a[None, :]
    if squeeze_col:
        b = b[:, None]
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul expects matrices or vectors")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for p in range(a.shape[1]):
        out += a[:, p : p + 1] * b[p : p + 1, :]
    if squeeze_row:
        out = out[0]
    if squeeze_col:
        out = out[..., 0]
    return out


def gram(x: np.ndarray) -> np.ndarray:
    """``x.T @ x`` accumulated row by row (a sum of outer products)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros((x.shape[1], x.shape[1]))
    for row in x:
        out += np.outer(row, row)
    return out


def frobenius_norm(a) -> float:
    """Square root of the sum of squared entries, accumulated in row-major order."""
    flat = np.asarray(a, dtype=np.float64).ravel()
    if flat.size == 0:
        return 0.0
    # cumsum accumulates strictly left to right (unlike pairwise np.sum)
    return float(np.sqrt(np.cumsum(flat * flat)[-1]))


class SeededRng:
    """Counter-based random stream identified by ``(seed, stream)``.

    Backed by the Philox generator keyed with the 128-bit value
    ``seed | stream << 64``, so identical identifiers give identical streams
    on every platform and different stream ids never share a key.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & MASK64
        self.stream = int(stream) & MASK64
        key = self.seed | (self.stream << 64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def child(self, *tags) -> "SeededRng":
        """Derive an independent stream from this one and a tuple of tags."""
        h = hashlib.blake2b(digest_size=8)
        h.update(repr((self.stream, tags)).encode())
        return SeededRng(self.seed, int.from_bytes(h.digest(), "little"))

    def normal(self, size, stddev: float = 1.0) -> np.ndarray:
        return self.generator.standard_normal(size) * stddev

    def uniform(self, size, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def uint64(self, size) -> np.ndarray:
        return self.generator.integers(0, 1 << 64, size=size, dtype=np.uint64, endpoint=False)

    def randbits(self, bits: int, size: int) -> np.ndarray:
        """Object array of uniform Python ints in ``[0, 2**bits)``."""
        words = -(-bits // 64)
        out = np.zeros(size, dtype=object)
        for _ in range(words):
            out = (out << 64) | self.uint64(size).astype(object)
        extra = words * 64 - bits
        if extra:
            out = out >> extra
        return out

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, stream={self.stream})"


def gaussian_matrix(rows: int, cols: int, stddev: float, rng: SeededRng) -> np.ndarray:
    """I.i.d. normal entries with mean 0 and *standard deviation* ``stddev``."""
    if not stddev > 0:
        raise ValueError("stddev must be positive")
    return rng.normal((rows, cols), stddev)
