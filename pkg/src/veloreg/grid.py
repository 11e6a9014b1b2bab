"""Periodic grid on (0, 2pi)^3 and deterministic field reductions.

Scalar fields are ``(N1, N2, N3)`` arrays in C order (x3 fastest); vector
fields stack three components as ``(3, N1, N2, N3)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi
# fixed chunk length for reductions, independent of thread count
_CHUNK = 1 << 16


class GridSizeError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, int, int]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) != 3:
            raise GridSizeError(f"expected three dimensions, got {self.dims!r}")
        for n in dims:
            if n < 16 or n % 2:
                raise GridSizeError(
                    f"grid dimensions must be even and >= 16, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(TWO_PI / n for n in self.dims)

    @property
    def size(self) -> int:
        n1, n2, n3 = self.dims
        return n1 * n2 * n3

    @property
    def cell_volume(self) -> float:
        h1, h2, h3 = self.spacing
        return h1 * h2 * h3

    def axis(self, i: int) -> np.ndarray:
        """Node coordinates along axis ``i`` (0-based)."""
        return np.arange(self.dims[i]) * self.spacing[i]

    def coords(self, dtype=np.float64) -> np.ndarray:
        """Node coordinates as a ``(3, N1, N2, N3)`` array."""
        return np.stack(np.meshgrid(*(self.axis(i) for i in range(3)),
                                    indexing="ij")).astype(dtype)

    def zeros(self, dtype=np.float32) -> np.ndarray:
        return np.zeros(self.dims, dtype=dtype)

    def zeros_vector(self, dtype=np.float32) -> np.ndarray:
        return np.zeros((3,) + self.dims, dtype=dtype)

    def check(self, *fields: np.ndarray) -> None:
        """Raise GridMismatchError unless every field lives on this grid."""
        for f in fields:
            if f.shape[-3:] != self.dims or f.ndim not in (3, 4):
                raise GridMismatchError(
                    f"field of shape {f.shape} does not match grid {self.dims}")


def make_grid(dims) -> Grid:
    return Grid(tuple(dims))


def grid_of(f: np.ndarray) -> Grid:
    return Grid(f.shape[-3:])


def _chunked_sum(x: np.ndarray) -> float:
    flat = x.reshape(-1)
    n = flat.size
    pad = (-n) % _CHUNK
    if pad:
        flat = np.concatenate([flat, np.zeros(pad, dtype=flat.dtype)])
    partial = flat.reshape(-1, _CHUNK).sum(axis=1)
    return float(partial.sum())


def inner_product(a: np.ndarray, b: np.ndarray, grid: Grid | None = None) -> float:
    """Quadrature-weighted L2 inner product ``h1*h2*h3 * sum(a*b)``.

    Works for scalar and vector fields alike. Accumulation is in float64
    with a fixed chunk order, so results are bitwise reproducible.
    """
    if a.shape != b.shape:
        raise GridMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    grid = grid or grid_of(a)
    grid.check(a)
    prod = a.astype(np.float64, copy=False) * b.astype(np.float64, copy=False)
    return grid.cell_volume * _chunked_sum(prod)


def norm2(a: np.ndarray, grid: Grid | None = None) -> float:
    return float(np.sqrt(max(inner_product(a, a, grid), 0.0)))


def wrap(x: np.ndarray) -> np.ndarray:
    """Map coordinates into [0, 2pi)."""
    y = np.mod(x, TWO_PI)
    # mod can round up to exactly 2pi for tiny negative inputs
    y[y >= TWO_PI] = 0.0
    return y
