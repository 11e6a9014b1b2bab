"""Scattered-data interpolation on the periodic grid.

Evaluates ``f(x) = sum_{ijk} c_ijk phi_i(x1) phi_j(x2) phi_k(x3)`` with

* ``LINEAR``   - trilinear, 8-node support, ``c = f``
* ``LAGRANGE`` - nodal cubic Lagrange, 64-node support, ``c = f``
* ``BSPLINE``  - uniform cubic B-spline, 64-node support, ``c = prefilter(f)``

Target points are given in radians and must already be wrapped to [0, 2pi).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np

from .counters import record, timed
from .grid import TWO_PI, Grid, grid_of, wrap


class InterpVariant(str, enum.Enum):
    LINEAR = "linear"
    LAGRANGE = "lagrange"
    BSPLINE = "bspline"


class InterpolationError(ValueError):
    pass


@dataclass(frozen=True)
class DeparturePoints:
    """Wrapped target coordinates, shape ``(3, N1, N2, N3)``.

    ``displacement`` keeps the unwrapped offset ``y - x`` so that maps can be
    composed across the periodic seam.
    """
    grid: Grid
    coords: np.ndarray
    displacement: np.ndarray | None = None
    is_identity: bool = False

    @classmethod
    def from_displacement(cls, grid: Grid, disp: np.ndarray) -> "DeparturePoints":
        if not np.all(np.isfinite(disp)):
            raise InterpolationError("non-finite displacement")
        x = grid.coords(np.float64)
        return cls(grid, wrap(x + disp), disp, not disp.any())

    @classmethod
    def identity(cls, grid: Grid) -> "DeparturePoints":
        return cls(grid, grid.coords(np.float64), np.zeros((3,) + grid.dims), True)


@dataclass(frozen=True)
class CoefficientField:
    """Cubic B-spline coefficients of a scalar (or stacked) field."""
    values: np.ndarray


# -- prefilter ----------------------------------------------------------------

BSPLINE_POLE = math.sqrt(3.0) - 2.0
PREFILTER_HALF_WIDTH = 7


def prefilter_taps(half_width: int = PREFILTER_HALF_WIDTH) -> np.ndarray:
    """Truncated impulse response of the exact inverse cubic B-spline filter.

    The exact response is ``6 z / (z^2 - 1) * z^|n|`` with ``z = sqrt(3) - 2``;
    truncation to ``|n| <= half_width`` is followed by renormalization to
    unit DC gain.
    """
    z = BSPLINE_POLE
    n = np.arange(-half_width, half_width + 1)
    taps = 6.0 * z / (z * z - 1.0) * z ** np.abs(n)
    return taps / taps.sum()


def prefilter_bspline(f: np.ndarray) -> CoefficientField:
    """Separable 15-tap periodic FIR along each axis in turn."""
    from scipy import ndimage

    grid = grid_of(f)
    grid.check(f)
    taps = prefilter_taps()
    axes = range(f.ndim - 3, f.ndim)
    with timed("prefilter"):
        c = f
        for ax in axes:
            c = ndimage.correlate1d(c, taps, axis=ax, mode="wrap")
    record(n_prefilter=1 if f.ndim == 3 else f.shape[0])
    return CoefficientField(c)


# -- kernels ------------------------------------------------------------------

@numba.njit(inline="always")
def _lagrange_weights(t):
    return (-t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0)


@numba.njit(inline="always")
def _bspline_weights(t):
    s = 1.0 - t
    t2 = t * t
    t3 = t2 * t
    return (s * s * s / 6.0,
            (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
            (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
            t3 / 6.0)


@numba.njit(inline="always")
def _cell(x, inv_h, n):
    s = x * inv_h
    i = int(math.floor(s))
    t = s - i
    i = i % n
    return i, t


@numba.njit(parallel=True, cache=True)
def _interp_linear(fields, pts, inv_h, out):
    nf, n1, n2, n3 = fields.shape
    m = pts.shape[1]
    for p in numba.prange(m):
        i, tx = _cell(pts[0, p], inv_h[0], n1)
        j, ty = _cell(pts[1, p], inv_h[1], n2)
        k, tz = _cell(pts[2, p], inv_h[2], n3)
        i1 = (i + 1) % n1
        j1 = (j + 1) % n2
        k1 = (k + 1) % n3
        for q in range(nf):
            f = fields[q]
            c00 = f[i, j, k] * (1.0 - tz) + f[i, j, k1] * tz
            c01 = f[i, j1, k] * (1.0 - tz) + f[i, j1, k1] * tz
            c10 = f[i1, j, k] * (1.0 - tz) + f[i1, j, k1] * tz
            c11 = f[i1, j1, k] * (1.0 - tz) + f[i1, j1, k1] * tz
            c0 = c00 * (1.0 - ty) + c01 * ty
            c1 = c10 * (1.0 - ty) + c11 * ty
            out[q, p] = c0 * (1.0 - tx) + c1 * tx


@numba.njit(inline="always")
def _cubic_point(f, ii, jj, kk, wx, wy, wz):
    acc = 0.0
    for a in range(4):
        sa = 0.0
        for b in range(4):
            sb = (f[ii[a], jj[b], kk[0]] * wz[0] + f[ii[a], jj[b], kk[1]] * wz[1]
                  + f[ii[a], jj[b], kk[2]] * wz[2] + f[ii[a], jj[b], kk[3]] * wz[3])
            sa += wy[b] * sb
        acc += wx[a] * sa
    return acc


@numba.njit(parallel=True, cache=True)
def _interp_cubic(fields, pts, inv_h, bspline, out):
    nf, n1, n2, n3 = fields.shape
    m = pts.shape[1]
    for p in numba.prange(m):
        i, tx = _cell(pts[0, p], inv_h[0], n1)
        j, ty = _cell(pts[1, p], inv_h[1], n2)
        k, tz = _cell(pts[2, p], inv_h[2], n3)
        if bspline:
            wx = _bspline_weights(tx)
            wy = _bspline_weights(ty)
            wz = _bspline_weights(tz)
        else:
            wx = _lagrange_weights(tx)
            wy = _lagrange_weights(ty)
            wz = _lagrange_weights(tz)
        ii = ((i - 1) % n1, i, (i + 1) % n1, (i + 2) % n1)
        jj = ((j - 1) % n2, j, (j + 1) % n2, (j + 2) % n2)
        kk = ((k - 1) % n3, k, (k + 1) % n3, (k + 2) % n3)
        for q in range(nf):
            out[q, p] = _cubic_point(fields[q], ii, jj, kk, wx, wy, wz)


def _as_points(points, grid: Grid) -> np.ndarray:
    coords = points.coords if isinstance(points, DeparturePoints) else np.asarray(points)
    if coords.shape[0] != 3:
        raise InterpolationError(f"points must have leading dimension 3, got {coords.shape}")
    pts = np.ascontiguousarray(coords.reshape(3, -1), dtype=np.float64)
    if not np.all(np.isfinite(pts)):
        raise InterpolationError("non-finite interpolation coordinates")
    if pts.size and (pts.min() < 0.0 or pts.max() >= TWO_PI):
        raise InterpolationError("interpolation coordinates must be wrapped to [0, 2pi)")
    return pts


def interp_eval(source, points, variant=InterpVariant.BSPLINE) -> np.ndarray:
    """Interpolate one field ``(N1,N2,N3)`` or a stack ``(k,N1,N2,N3)`` at points.

    For ``BSPLINE`` the source must be a :class:`CoefficientField`; the other
    variants take nodal values. The result has shape ``points.shape[1:]``
    (with a leading ``k`` for stacked input) and the source dtype.
    """
    variant = InterpVariant(variant)
    if variant is InterpVariant.BSPLINE:
        if not isinstance(source, CoefficientField):
            raise InterpolationError("BSPLINE interpolation needs a CoefficientField "
                                     "(run prefilter_bspline first)")
        values = source.values
    else:
        if isinstance(source, CoefficientField):
            raise InterpolationError(f"{variant.value} interpolation takes nodal values")
        values = np.asarray(source)
    stacked = values.ndim == 4
    fields = values if stacked else values[None]
    grid = grid_of(fields)
    pts = _as_points(points, grid)
    out_shape = (points.coords if isinstance(points, DeparturePoints) else np.asarray(points)).shape[1:]
    fields = np.ascontiguousarray(fields)
    out = np.empty((fields.shape[0], pts.shape[1]), dtype=fields.dtype)
    inv_h = np.array([1.0 / h for h in grid.spacing])
    with timed(f"interp_{variant.value}"):
        if variant is InterpVariant.LINEAR:
            _interp_linear(fields, pts, inv_h, out)
        else:
            _interp_cubic(fields, pts, inv_h, variant is InterpVariant.BSPLINE, out)
    record(n_interp=fields.shape[0])
    out = out.reshape((fields.shape[0],) + out_shape)
    return out if stacked else out[0]


def prepare(f: np.ndarray, variant) -> np.ndarray | CoefficientField:
    """Return what :func:`interp_eval` expects as source for ``variant``."""
    if InterpVariant(variant) is InterpVariant.BSPLINE:
        return prefilter_bspline(f)
    return f


def interpolate(f: np.ndarray, points, variant=InterpVariant.BSPLINE) -> np.ndarray:
    """Prefilter if needed, then evaluate at ``points``.

    Zero-displacement departure points return ``f`` unchanged (the exact
    interpolation condition, which the truncated prefilter only approximates).
    """
    if isinstance(points, DeparturePoints) and points.is_identity:
        grid_of(f).check(f)
        record(n_interp=1 if f.ndim == 3 else f.shape[0])
        return f.copy()
    return interp_eval(prepare(f, variant), points, variant)


def nearest(labels: np.ndarray, points) -> np.ndarray:
    """Nearest-node lookup (for label maps); periodic."""
    grid = grid_of(labels)
    pts = _as_points(points, grid)
    idx = [np.rint(pts[a] / grid.spacing[a]).astype(np.int64) % grid.dims[a]
           for a in range(3)]
    out_shape = (points.coords if isinstance(points, DeparturePoints) else np.asarray(points)).shape[1:]
    return labels[idx[0], idx[1], idx[2]].reshape(out_shape)
