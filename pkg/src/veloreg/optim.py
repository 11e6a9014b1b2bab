"""Reduced-space Gauss-Newton-Krylov solver for velocity registration.

Objective::

    J(v) = 1/2 ||m(., 1) - m1||^2 + beta/2 <A v, v>

where ``m`` solves the forward transport equation from ``m0``. Gradients
come from the adjoint equation; the search direction solves the Gauss-Newton
system with PCG preconditioned by ``(beta A)^-1``; steps are globalized by
Armijo backtracking and beta is reduced by continuation.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .counters import OperatorCounters, counting, timed
from .diffops import (DerivativeBackend, RegularizationConfig, apply_inverse_regularization,
                      apply_regularization, gradient)
from .grid import GridMismatchError, grid_of, inner_product, norm2
from .interp import InterpVariant
from .transport import (TimeGrid, TrajectoryMismatchError, TrajectoryStore, solve_adjoint,
                        solve_inc_adjoint, solve_inc_state, solve_state)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Continuation:
    enabled: bool = True
    beta0: float = 1e-1
    factor: float = 10.0
    stage_gtol: float = 2.5e-1

    def schedule(self, target: float) -> list[float]:
        if not self.enabled or self.beta0 <= target:
            return [target]
        betas, b = [], self.beta0
        while b > target * (1 + 1e-12):
            betas.append(b)
            b /= self.factor
        betas.append(target)
        return betas


@dataclass(frozen=True)
class SolverConfig:
    reg: RegularizationConfig = RegularizationConfig()
    timegrid: TimeGrid = TimeGrid(4)
    gtol: float = 5e-2
    max_newton: int = 50
    max_pcg: int = 500
    armijo_c: float = 1e-4
    max_linesearch: int = 10
    forcing: str = "superlinear"
    continuation: Continuation = Continuation()
    variant: InterpVariant = InterpVariant.BSPLINE
    backend: DerivativeBackend = DerivativeBackend.FD8
    dtype: str = "float32"

    def __post_init__(self):
        if not 0 < self.gtol < 1:
            raise ValueError(f"gtol must lie in (0, 1), got {self.gtol}")
        if min(self.max_newton, self.max_pcg, self.max_linesearch) < 1:
            raise ValueError("iteration caps must be positive")
        if self.continuation.enabled and self.continuation.beta0 < self.reg.beta:
            raise ValueError("continuation beta0 must be >= target beta")
        if self.forcing not in ("superlinear", "quadratic", "constant"):
            raise ValueError(f"unknown forcing sequence {self.forcing!r}")
        object.__setattr__(self, "variant", InterpVariant(self.variant))
        object.__setattr__(self, "backend", DerivativeBackend(self.backend))

    @property
    def beta(self) -> float:
        return self.reg.beta

    def with_beta(self, beta: float) -> "SolverConfig":
        return replace(self, reg=replace(self.reg, beta=beta))

    def forcing_term(self, grad_rel: float) -> float:
        if self.forcing == "superlinear":
            return min(0.5, math.sqrt(grad_rel))
        if self.forcing == "quadratic":
            return min(0.5, grad_rel)
        return 0.5


@dataclass
class IterationLog:
    stage: int
    beta: float
    iteration: int
    grad_rel: float
    objective: float
    pcg_iters: int = 0
    alpha: float = 0.0
    pcg_flag: str = ""
    counters: dict = field(default_factory=dict)


class LineSearchFailure(RuntimeError):
    pass


def _cast(a, cfg):
    return np.asarray(a, dtype=np.dtype(cfg.dtype))


def _regularization_energy(v, cfg):
    return 0.5 * cfg.beta * inner_product(apply_regularization(v, cfg.reg), v)


def evaluate_objective(v, m0, m1, cfg: SolverConfig):
    """Return ``(J, trajectory)``; the trajectory is reused by the gradient."""
    grid = grid_of(m0)
    grid.check(v, m1)
    with timed("objective"):
        traj = solve_state(v, m0, cfg.timegrid, cfg.variant)
        misfit = 0.5 * norm2(traj.final - m1) ** 2
        J = misfit + _regularization_energy(v, cfg)
    traj.meta["misfit"] = misfit
    return J, traj


def _time_integral(lam_traj: TrajectoryStore, m_traj: TrajectoryStore, cfg) -> np.ndarray:
    """Trapezoid rule for ``int_0^1 lam grad m dt`` over the stored slices."""
    w = cfg.timegrid.trapezoid_weights()
    acc = np.zeros((3,) + m_traj.grid.dims)
    for j, wj in enumerate(w):
        acc += wj * (lam_traj[j].astype(np.float64) * gradient(m_traj[j], cfg.backend))
    return acc


def evaluate_gradient(v, m0, m1, cfg: SolverConfig, traj: TrajectoryStore | None = None):
    """Reduced gradient ``beta A v + int lam grad m dt``.

    ``traj`` is the state trajectory from :func:`evaluate_objective` at the
    same ``v``; without it the state equation is solved here first. The
    adjoint departure points are attached to ``traj`` for later matvecs.
    """
    grid = grid_of(m0)
    grid.check(v, m1)
    if traj is None:
        _, traj = evaluate_objective(v, m0, m1, cfg)
    with timed("gradient"):
        lam = solve_adjoint(v, m1 - traj.final, cfg.timegrid, cfg.variant, cfg.backend)
        traj.backward_points = lam.backward_points
        g = cfg.beta * apply_regularization(v, cfg.reg).astype(np.float64)
        g += _time_integral(lam, traj, cfg)
    g = g.astype(v.dtype)
    return g, {"grad_norm": norm2(g)}


def hessian_matvec(v_tilde, v, m_traj: TrajectoryStore, cfg: SolverConfig) -> np.ndarray:
    """Gauss-Newton matvec ``beta A v~ + int lam~ grad m dt``."""
    if m_traj.timegrid.nt != cfg.timegrid.nt:
        raise TrajectoryMismatchError("trajectory and solver use different time grids")
    if v_tilde.shape != v.shape or m_traj.grid.dims != v.shape[1:]:
        raise GridMismatchError("matvec operands live on different grids")
    with timed("matvec"):
        m_inc = solve_inc_state(v, v_tilde, m_traj, cfg.timegrid, cfg.variant, cfg.backend)
        lam_inc = solve_inc_adjoint(v, -m_inc.final, cfg.timegrid, cfg.variant, cfg.backend,
                                    points=m_traj.backward_points)
        m_traj.backward_points = lam_inc.backward_points
        hv = cfg.beta * apply_regularization(v_tilde, cfg.reg).astype(np.float64)
        hv += _time_integral(lam_inc, m_traj, cfg)
    return hv.astype(v.dtype)


def _flat_inner(a, b):
    return float(np.vdot(a.astype(np.float64).ravel(), b.astype(np.float64).ravel()))


@dataclass
class PCGResult:
    x: np.ndarray
    iterations: int
    flag: str
    residuals: list


def pcg_solve(matvec: Callable, g: np.ndarray, eta: float, precond: Callable | None = None,
              max_iter: int = 500, inner: Callable = _flat_inner) -> PCGResult:
    """Solve ``H x = -g`` by preconditioned CG to relative residual ``eta``.

    ``flag`` is ``"converged"``, ``"max_iter"`` or ``"negative_curvature"``;
    on negative curvature at the first iteration the preconditioned steepest
    descent direction is returned.
    """
    precond = precond or (lambda r: r)
    x = np.zeros_like(g)
    r = -g.astype(np.float64)
    r0 = math.sqrt(max(inner(r, r), 0.0))
    residuals = [r0]
    if r0 == 0.0:
        return PCGResult(x, 0, "converged", residuals)
    z = precond(r.astype(g.dtype)).astype(np.float64)
    p = z.copy()
    rz = inner(r, z)
    xk = np.zeros(g.shape)
    for k in range(max_iter):
        hp = matvec(p.astype(g.dtype)).astype(np.float64)
        curv = inner(p, hp)
        if curv <= 0.0:
            if k == 0:
                xk = z
            return PCGResult(xk.astype(g.dtype), k, "negative_curvature", residuals)
        alpha = rz / curv
        xk += alpha * p
        r -= alpha * hp
        rn = math.sqrt(max(inner(r, r), 0.0))
        residuals.append(rn)
        if rn <= eta * r0:
            return PCGResult(xk.astype(g.dtype), k + 1, "converged", residuals)
        z = precond(r.astype(g.dtype)).astype(np.float64)
        rz_new = inner(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return PCGResult(xk.astype(g.dtype), max_iter, "max_iter", residuals)


def armijo_linesearch(objective: Callable, J0: float, v, dv, g, cfg: SolverConfig):
    """Backtracking ``alpha in {1, 1/2, 1/4, ...}`` with the Armijo condition.

    ``objective(v)`` must return ``(J, payload)``. Returns ``(alpha, J, payload)``.
    """
    slope = inner_product(g, dv)
    if not slope < 0.0:
        raise ValueError(f"search direction is not a descent direction (<g, dv> = {slope:.3e})")
    alpha = 1.0
    for _ in range(cfg.max_linesearch):
        trial = (v.astype(np.float64) + alpha * dv).astype(v.dtype)
        J, payload = objective(trial)
        if J <= J0 + cfg.armijo_c * alpha * slope:
            return alpha, J, payload
        alpha *= 0.5
    raise LineSearchFailure(f"no sufficient decrease after {cfg.max_linesearch} trials")


@dataclass
class RegistrationReport:
    status: str
    mismatch: float
    grad_rel: float
    iterations: int
    matvecs: int
    objective: float
    stages: list
    log: list
    counters: dict
    timings: dict
    detF: dict | None = None
    config: dict | None = None
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _config_dict(cfg: SolverConfig) -> dict:
    d = asdict(cfg)
    d["variant"] = cfg.variant.value
    d["backend"] = cfg.backend.value
    return d


def gauss_newton_solve(m0, m1, cfg: SolverConfig = SolverConfig(), v0=None,
                       callback: Callable | None = None):
    """Register ``m0`` (template) to ``m1`` (reference); returns ``(v, report)``.

    Status is ``"converged"``, ``"max_newton"`` or ``"linesearch_failed"``.
    """
    from .metrics import compute_deformation_map, det_deformation_gradient, relative_mismatch

    t_start = time.perf_counter()
    m0 = _cast(m0, cfg)
    m1 = _cast(m1, cfg)
    grid = grid_of(m0)
    grid.check(m1)
    v = grid.zeros_vector(m0.dtype) if v0 is None else _cast(v0, cfg).copy()
    counters = OperatorCounters()
    entries: list[IterationLog] = []
    stages = []
    status = "converged"
    newton_total = matvecs = 0

    with counting(counters):
        # the gradient at v = 0 has no regularization part, so it is beta-free
        zero = grid.zeros_vector(m0.dtype)
        J_ref, traj_ref = evaluate_objective(zero, m0, m1, cfg)
        g_ref, _ = evaluate_gradient(zero, m0, m1, cfg, traj_ref)
        g_ref_norm = norm2(g_ref)

        betas = cfg.continuation.schedule(cfg.beta)
        J = grad_rel = float("nan")
        traj = None
        for s, beta in enumerate(betas):
            scfg = cfg.with_beta(beta)
            last = s == len(betas) - 1
            tol = cfg.gtol if last else max(cfg.gtol, cfg.continuation.stage_gtol)
            if traj is None:
                J, traj = evaluate_objective(v, m0, m1, scfg)
            else:
                # state is beta-independent; only the regularization term changes
                J = traj.meta["misfit"] + _regularization_energy(v, scfg)
            stage = {"beta": beta, "gtol": tol, "iterations": 0, "matvecs": 0, "status": ""}
            stages.append(stage)
            while True:
                g, _ = evaluate_gradient(v, m0, m1, scfg, traj)
                grad_rel = norm2(g) / g_ref_norm if g_ref_norm > 0 else 0.0
                entry = IterationLog(s, beta, stage["iterations"], grad_rel, J,
                                     counters=counters.snapshot())
                entries.append(entry)
                log.info("stage %d beta=%.1e it=%d J=%.6e |g|rel=%.3e",
                         s, beta, stage["iterations"], J, grad_rel)
                if callback is not None:
                    callback(entry)
                if grad_rel <= tol:
                    stage["status"] = "converged"
                    break
                if newton_total >= cfg.max_newton:
                    stage["status"] = status = "max_newton"
                    break
                eta = cfg.forcing_term(grad_rel)
                res = pcg_solve(lambda p: hessian_matvec(p, v, traj, scfg), g, eta,
                                precond=lambda r: apply_inverse_regularization(r, scfg.reg),
                                max_iter=cfg.max_pcg,
                                inner=lambda a, b: inner_product(a, b, grid))
                entry.pcg_iters, entry.pcg_flag = res.iterations, res.flag
                matvecs += res.iterations
                stage["matvecs"] += res.iterations
                try:
                    alpha, J, traj = armijo_linesearch(
                        lambda w: evaluate_objective(w, m0, m1, scfg), J, v, res.x, g, scfg)
                except (LineSearchFailure, ValueError) as exc:
                    log.warning("line search failed: %s", exc)
                    stage["status"] = status = "linesearch_failed"
                    break
                entry.alpha = alpha
                v = (v.astype(np.float64) + alpha * res.x).astype(v.dtype)
                newton_total += 1
                stage["iterations"] += 1
            if status != "converged":
                break

        if traj is None:
            J, traj = evaluate_objective(v, m0, m1, cfg)
        mismatch = relative_mismatch(traj.final, m1, m0) if np.any(m1 != m0) else 0.0
        dmap = compute_deformation_map(v, cfg.timegrid, cfg.variant)
        _, detf = det_deformation_gradient(dmap, cfg.backend)

    report = RegistrationReport(
        status=status, mismatch=float(mismatch), grad_rel=float(grad_rel),
        iterations=newton_total, matvecs=matvecs, objective=float(J), stages=stages,
        log=[asdict(e) for e in entries], counters=counters.snapshot(),
        timings=dict(counters.timings), detF=asdict(detf), config=_config_dict(cfg),
        wall_time=time.perf_counter() - t_start)
    return v, report
