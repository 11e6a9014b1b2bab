"""Semi-Lagrangian solvers for the forward, adjoint and incremental transport equations.

Because the velocity is stationary, departure points are traced once per
direction and reused for every time step. The state solve stores its
departure points in the returned :class:`TrajectoryStore`; the gradient
attaches the reversed-time points, and the incremental solves reuse both.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffops import DerivativeBackend, divergence, gradient
from .grid import Grid, GridMismatchError, grid_of
from .interp import DeparturePoints, InterpVariant, interpolate


@dataclass(frozen=True)
class TimeGrid:
    nt: int = 4

    def __post_init__(self):
        if int(self.nt) < 1:
            raise ValueError(f"need at least one time step, got nt={self.nt}")

    @property
    def dt(self) -> float:
        return 1.0 / self.nt

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.nt + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


@dataclass
class TrajectoryStore:
    """Time slices ``u(., t_j)``, ``j = 0..nt``, plus cached departure points."""
    slices: np.ndarray
    timegrid: TimeGrid
    forward_points: DeparturePoints | None = None
    backward_points: DeparturePoints | None = None
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return grid_of(self.slices)

    @property
    def final(self) -> np.ndarray:
        return self.slices[-1]

    def __len__(self):
        return self.slices.shape[0]

    def __getitem__(self, j):
        return self.slices[j]


class TrajectoryMismatchError(ValueError):
    pass


def trace_characteristics(v: np.ndarray, dt: float, direction: int = 1,
                          variant=InterpVariant.BSPLINE) -> DeparturePoints:
    """Backtrace one step of ``dy/dt = direction * v(y)`` with a midpoint (Heun) rule.

    ``y* = x - direction*dt*v(x)``, ``y = x - direction*dt/2*(v(x) + v(y*))``.
    Costs one interpolation of each velocity component.
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    grid = grid_of(v)
    grid.check(v)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite velocity")
    s = direction * dt
    v64 = v.astype(np.float64)
    predictor = DeparturePoints.from_displacement(grid, -s * v64)
    v_star = interpolate(v, predictor, variant).astype(np.float64)
    return DeparturePoints.from_displacement(grid, -0.5 * s * (v64 + v_star))


def _check_velocity(v, *fields):
    grid = grid_of(v)
    if v.ndim != 4 or v.shape[0] != 3:
        raise GridMismatchError(f"velocity must have shape (3, N1, N2, N3), got {v.shape}")
    grid.check(*fields)
    return grid


def solve_state(v: np.ndarray, m0: np.ndarray, tg: TimeGrid = TimeGrid(),
                variant=InterpVariant.BSPLINE,
                points: DeparturePoints | None = None) -> TrajectoryStore:
    """Transport ``m0`` by ``dm/dt + v.grad m = 0`` over t in [0, 1]."""
    grid = _check_velocity(v, m0)
    if points is None:
        points = trace_characteristics(v, tg.dt, +1, variant)
    out = np.empty((tg.nt + 1,) + grid.dims, dtype=m0.dtype)
    out[0] = m0
    for j in range(tg.nt):
        out[j + 1] = interpolate(out[j], points, variant)
    return TrajectoryStore(out, tg, forward_points=points)


def _continuity_backward(v, final, tg, variant, backend, points):
    grid = grid_of(v)
    if points is None:
        points = trace_characteristics(v, tg.dt, -1, variant)
    div_v = divergence(v, backend)
    div_dep = interpolate(div_v, points, variant)
    factor = np.exp(0.5 * tg.dt * (div_v.astype(np.float64) + div_dep))
    out = np.empty((tg.nt + 1,) + grid.dims, dtype=final.dtype)
    out[-1] = final
    for j in range(tg.nt, 0, -1):
        out[j - 1] = interpolate(out[j], points, variant) * factor
    return TrajectoryStore(out, tg, backward_points=points)


def solve_adjoint(v: np.ndarray, lam_final: np.ndarray, tg: TimeGrid = TimeGrid(),
                  variant=InterpVariant.BSPLINE, backend=DerivativeBackend.FD8,
                  points: DeparturePoints | None = None) -> TrajectoryStore:
    """Solve ``-d(lam)/dt - div(lam v) = 0`` backward from ``lam(1) = lam_final``.

    Each step advects along the reversed flow and multiplies by
    ``exp(dt * (div v(x) + div v(y)) / 2)``.
    """
    _check_velocity(v, lam_final)
    return _continuity_backward(v, lam_final, tg, variant, backend, points)


def solve_inc_adjoint(v: np.ndarray, lam_final: np.ndarray, tg: TimeGrid = TimeGrid(),
                      variant=InterpVariant.BSPLINE, backend=DerivativeBackend.FD8,
                      points: DeparturePoints | None = None) -> TrajectoryStore:
    """Incremental adjoint; the same continuity operator as :func:`solve_adjoint`."""
    _check_velocity(v, lam_final)
    return _continuity_backward(v, lam_final, tg, variant, backend, points)


def solve_inc_state(v: np.ndarray, v_tilde: np.ndarray, m_traj: TrajectoryStore,
                    tg: TimeGrid | None = None, variant=InterpVariant.BSPLINE,
                    backend=DerivativeBackend.FD8) -> TrajectoryStore:
    """Linearized state ``dm~/dt + v.grad m~ + v~.grad m = 0``, ``m~(0) = 0``.

    The source ``-v~.grad m`` is integrated with the trapezoid rule along
    each characteristic, using the state departure points from ``m_traj``.
    """
    tg = tg or m_traj.timegrid
    grid = _check_velocity(v, v_tilde[0], m_traj.slices[0])
    if tg.nt != m_traj.timegrid.nt or len(m_traj) != tg.nt + 1:
        raise TrajectoryMismatchError(
            f"trajectory has {len(m_traj) - 1} steps, time grid has {tg.nt}")
    if v_tilde.shape != v.shape:
        raise GridMismatchError("velocity and perturbation shapes differ")
    points = m_traj.forward_points
    if points is None:
        raise TrajectoryMismatchError("trajectory carries no state departure points")
    dtype = m_traj.slices.dtype
    vt = v_tilde.astype(np.float64)
    vt_dep = interpolate(v_tilde, points, variant).astype(np.float64)
    out = np.zeros((tg.nt + 1,) + grid.dims, dtype=dtype)
    grad_prev = gradient(m_traj[0], backend)
    half = 0.5 * tg.dt
    for j in range(tg.nt):
        grad_next = gradient(m_traj[j + 1], backend)
        # one stacked sweep: m~_j and the three gradient components at y
        stack = np.concatenate([out[j][None], grad_prev])
        at_dep = interpolate(stack, points, variant).astype(np.float64)
        src_dep = np.einsum("i...,i...->...", vt_dep, at_dep[1:])
        src_arr = np.einsum("i...,i...->...", vt, grad_next)
        out[j + 1] = at_dep[0] - half * (src_dep + src_arr)
        grad_prev = grad_next
    return TrajectoryStore(out, tg, forward_points=points)
