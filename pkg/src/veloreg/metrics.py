"""Deformation maps, det F, relative mismatch and DICE overlap."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffops import DerivativeBackend, gradient
from .grid import GridMismatchError, grid_of, norm2
from .interp import DeparturePoints, InterpVariant, interpolate, nearest
from .transport import TimeGrid, trace_characteristics


@dataclass
class DeformationMap:
    """Pullback map ``y(x) = x + u(x)`` stored as a periodic displacement."""
    displacement: np.ndarray

    @property
    def points(self) -> DeparturePoints:
        return DeparturePoints.from_displacement(grid_of(self.displacement),
                                                 self.displacement.astype(np.float64))


@dataclass
class DetFStats:
    min: float
    mean: float
    max: float


def compute_deformation_map(v, tg: TimeGrid = TimeGrid(), variant=InterpVariant.BSPLINE,
                            points: DeparturePoints | None = None) -> DeformationMap:
    """Compose the per-step departure maps of ``v`` into one pullback map.

    ``m(x, 1) = m0(x + u(x))`` up to interpolation error. Per step,
    ``u_{j+1}(x) = (y(x) - x) + u_j(y(x))`` with ``y`` the departure point.
    """
    grid = grid_of(v)
    if points is None:
        points = trace_characteristics(v, tg.dt, +1, variant)
    step = points.displacement
    u = np.zeros((3,) + grid.dims)
    for _ in range(tg.nt):
        u = step + interpolate(u, points, variant)
    return DeformationMap(u.astype(v.dtype))


def warp(image, dmap: DeformationMap, variant=InterpVariant.BSPLINE) -> np.ndarray:
    """Pull an image back through the map: ``image(x + u(x))``."""
    return interpolate(image, dmap.points, variant).astype(image.dtype)


def warp_labels(labels, dmap: DeformationMap) -> np.ndarray:
    """Nearest-neighbour pullback; label ids are preserved exactly."""
    return nearest(labels, dmap.points)


def det_deformation_gradient(dmap: DeformationMap, backend=DerivativeBackend.FD8):
    """``det(I + grad u)`` per node and its min/mean/max."""
    u = dmap.displacement
    J = np.empty((3, 3) + u.shape[1:])
    for i in range(3):
        J[i] = gradient(u[i], backend).astype(np.float64)
        J[i, i] += 1.0
    det = (J[0, 0] * (J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1])
           - J[0, 1] * (J[1, 0] * J[2, 2] - J[1, 2] * J[2, 0])
           + J[0, 2] * (J[1, 0] * J[2, 1] - J[1, 1] * J[2, 0]))
    stats = DetFStats(float(det.min()), float(det.mean()), float(det.max()))
    return det, stats


def relative_mismatch(m_final, m1, m0) -> float:
    """``||m(., 1) - m1|| / ||m1 - m0||``."""
    if not (m_final.shape == m1.shape == m0.shape):
        raise GridMismatchError("images live on different grids")
    denom = norm2(m1 - m0)
    if denom == 0.0:
        raise ZeroDivisionError("reference and template are identical; mismatch undefined")
    return norm2(m_final - m1) / denom


def dice(a, b, labels=None) -> float:
    """``2|A & B| / (|A| + |B|)`` over the union of ``labels`` (default: all nonzero)."""
    if a.shape != b.shape:
        raise GridMismatchError(f"label maps differ in shape: {a.shape} vs {b.shape}")
    if labels is None:
        A, B = a != 0, b != 0
    else:
        labels = list(labels)
        A, B = np.isin(a, labels), np.isin(b, labels)
    total = int(A.sum()) + int(B.sum())
    if total == 0:
        raise ValueError("both label supports are empty")
    return 2.0 * int(np.logical_and(A, B).sum()) / total
