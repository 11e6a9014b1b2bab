"""Desk-scale accuracy sweeps and throughput / arithmetic-intensity benchmarks."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .counters import counting
from .diffops import DerivativeBackend, fd8_partial, spectral_partial
from .grid import Grid, make_grid, norm2
from .interp import DeparturePoints, InterpVariant, interp_eval, prefilter_bspline, prepare
from .synth import bandlimited_velocity, blobs
from .transport import TimeGrid, solve_state

# Analytic per-point counts. FLOPs count add/mul/other as 1 and FMA as 2;
# MOPS assume every input is loaded once (bytes per target point).
ANALYTIC_FLOPS = {
    "prefilter": 22, "linear": 30, "lagrange": 221, "bspline": 294,
    "fd8-partial": 12, "copy-baseline": 0,
}
ANALYTIC_MOPS = {
    "prefilter": 8, "linear": 20, "lagrange": 20, "bspline": 20,
    "fd8-partial": 8, "copy-baseline": 8,
}
KERNELS = tuple(ANALYTIC_FLOPS)

# reference hardware from the original GPU study; metadata only
REFERENCE_DEVICE = {"name": "NVIDIA Tesla V100", "peak_gflops": 14000.0, "peak_gbs": 900.0}


@dataclass
class IntensityModel:
    peak_gflops: float = REFERENCE_DEVICE["peak_gflops"]
    peak_gbs: float = REFERENCE_DEVICE["peak_gbs"]
    flops: dict = field(default_factory=lambda: dict(ANALYTIC_FLOPS))
    mops: dict = field(default_factory=lambda: dict(ANALYTIC_MOPS))

    @property
    def device_intensity(self) -> float:
        return self.peak_gflops / self.peak_gbs

    def intensity(self, kernel: str) -> float:
        return self.flops[kernel] / self.mops[kernel]

    def bound_by(self, kernel: str) -> str:
        return "memory" if self.intensity(kernel) < self.device_intensity else "compute"

    def table(self) -> list[dict]:
        return [{"kernel": k, "flops": self.flops[k], "mops": self.mops[k],
                 "intensity": round(self.intensity(k), 4), "bound_by": self.bound_by(k)}
                for k in self.flops]


@dataclass
class BenchReport:
    kernel: str
    N: int
    time_s: float
    bytes: int
    eff_bw: float
    rel_err: float = float("nan")
    intensity: float = float("nan")
    bound_by: str = ""

    CSV_COLUMNS = ("kernel", "N", "time_s", "bytes", "eff_bw", "rel_err", "intensity")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_COLUMNS}


def effective_bandwidth(nbytes: float, seconds: float) -> float:
    """GB/s from model bytes read plus written."""
    return nbytes / (seconds * 1e9) if seconds > 0 else float("inf")


# -- accuracy sweeps ------------------------------------------------------------

def derivative_accuracy_sweep(n: int = 64, backend=DerivativeBackend.FD8, dtype="float32",
                              omegas=None) -> list[dict]:
    """Relative L2 error of d/dx3 [sin(w x3) + cos(w x3)] for w = 1 .. n/2."""
    backend = DerivativeBackend(backend)
    grid = make_grid((16, 16, n))
    x3 = grid.coords(np.float64)[2]
    rows = []
    for w in (omegas or range(1, n // 2 + 1)):
        f = (np.sin(w * x3) + np.cos(w * x3)).astype(dtype)
        exact = w * (np.cos(w * x3) - np.sin(w * x3))
        if backend is DerivativeBackend.FD8:
            d = fd8_partial(f, 2)
        else:
            d = spectral_partial(f, 2)
        err = norm2(d.astype(np.float64) - exact) / norm2(exact)
        rows.append({"omega": int(w), "rel_err": float(err), "backend": backend.value,
                     "dtype": str(np.dtype(dtype))})
    return rows


def perturbed_points(grid: Grid, seed: int = 42, magnitude: float = 0.5) -> DeparturePoints:
    """Grid nodes moved by U[-magnitude*h, magnitude*h] per axis."""
    rng = np.random.default_rng(seed)
    disp = np.stack([rng.uniform(-magnitude, magnitude, grid.dims) * h for h in grid.spacing])
    return DeparturePoints.from_displacement(grid, disp)


def table3_function(x: np.ndarray) -> np.ndarray:
    return (np.sin(8 * x[0]) ** 2 + np.sin(2 * x[1]) ** 2 + np.sin(4 * x[2]) ** 2) / 3


def interp_accuracy_bench(n: int = 64, variant=InterpVariant.BSPLINE, seed: int = 42,
                          magnitude: float = 0.5, reps: int = 100) -> dict:
    """Interpolation error on perturbed nodes and mean time per call (prefilter included)."""
    variant = InterpVariant(variant)
    grid = make_grid((n, n, n))
    f = table3_function(grid.coords()).astype(np.float32)
    pts = perturbed_points(grid, seed, magnitude)
    exact = table3_function(pts.coords)
    result = interp_eval(prepare(f, variant), pts, variant)
    t0 = time.perf_counter()
    for _ in range(reps):
        interp_eval(prepare(f, variant), pts, variant)
    t = (time.perf_counter() - t0) / max(reps, 1)
    err = norm2(result.astype(np.float64) - exact) / norm2(exact)
    return {"N": n, "variant": variant.value, "rel_err": float(err), "time_s": t,
            "seed": seed, "magnitude": magnitude, "reps": reps}


def advect_roundtrip_bench(n: int = 64, variant=InterpVariant.BSPLINE, seed: int = 0,
                           amplitude: float = 0.5, nt: int = 4, zero_velocity: bool = False) -> dict:
    """Transport a smooth image forward by ``v`` then back by ``-v``; relative error."""
    grid = make_grid((n, n, n))
    image = blobs(grid, seed)
    v = grid.zeros_vector() if zero_velocity else bandlimited_velocity(grid, seed + 1, 2, amplitude)
    tg = TimeGrid(nt)
    t0 = time.perf_counter()
    with counting() as c:
        fwd = solve_state(v, image, tg, variant).final
        back = solve_state(-v, fwd, tg, variant).final
    t = time.perf_counter() - t0
    return {"N": n, "variant": InterpVariant(variant).value,
            "rel_err": float(norm2(back - image) / norm2(image)),
            "n_interp": c.n_interp, "time_s": t}


# -- throughput ------------------------------------------------------------------

def throughput_bench(kernel: str, n: int = 64, reps: int = 10, seed: int = 42,
                     model: IntensityModel | None = None) -> BenchReport:
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {KERNELS}")
    model = model or IntensityModel()
    grid = make_grid((n, n, n))
    f = table3_function(grid.coords()).astype(np.float32)
    pts = perturbed_points(grid, seed)
    rel_err = float("nan")
    out = np.empty_like(f)

    if kernel == "copy-baseline":
        def run():
            np.copyto(out, f)
    elif kernel == "prefilter":
        def run():
            prefilter_bspline(f)
    elif kernel == "fd8-partial":
        def run():
            fd8_partial(f, 2)
    else:
        variant = InterpVariant(kernel)
        # bspline is timed without its prefilter
        src = prepare(f, variant)

        def run():
            return interp_eval(src, pts, variant)
        rel_err = float(norm2(run().astype(np.float64) - table3_function(pts.coords))
                        / norm2(table3_function(pts.coords)))

    run()  # warm-up / JIT
    t0 = time.perf_counter()
    for _ in range(reps):
        run()
    t = (time.perf_counter() - t0) / reps
    nbytes = model.mops[kernel] * grid.size
    return BenchReport(kernel, n, t, nbytes, effective_bandwidth(nbytes, t), rel_err,
                       model.intensity(kernel), model.bound_by(kernel))


def write_reports(reports, csv_path=None, json_path=None, extra: dict | None = None) -> dict:
    """Write one CSV row per report and a JSON summary; returns the summary."""
    rows = [r.row() if isinstance(r, BenchReport) else r for r in reports]
    if csv_path:
        Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
        cols = list(BenchReport.CSV_COLUMNS) if all(isinstance(r, BenchReport) for r in reports) \
            else sorted({k for r in rows for k in r})
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            w.writerows(rows)
    summary = {"rows": [asdict(r) if isinstance(r, BenchReport) else r for r in reports]}
    if extra:
        summary.update(extra)
    if json_path:
        Path(json_path).parent.mkdir(parents=True, exist_ok=True)
        Path(json_path).write_text(json.dumps(summary, indent=2, default=float) + "\n")
    return summary
