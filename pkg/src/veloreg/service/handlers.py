"""Workflow handlers: file in, file out. Used by both the API and the CLI."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import bench, metrics, synth
from ..diffops import RegularizationConfig
from ..grid import GridMismatchError, make_grid
from ..interp import InterpVariant
from ..optim import Continuation, SolverConfig, gauss_newton_solve
from ..transport import TimeGrid, solve_state
from ..volio import VolumeFormatError, read_vector, read_volume, write_vector, write_volume
from .schemas import (BenchRequest, BenchResponse, MetricsRequest, MetricsResponse,
                      RegisterRequest, RegisterResponse, SynthRequest, SynthResponse,
                      WarpRequest, WarpResponse)

EXIT_CODES = {"converged": 0, "max_newton": 2, "linesearch_failed": 2}


class ServiceError(ValueError):
    """Bad inputs (unreadable volumes, mismatched grids, ...)."""


def _read(path, what):
    try:
        return read_volume(path)
    except (VolumeFormatError, OSError) as exc:
        raise ServiceError(f"cannot read {what} {path}: {exc}") from exc


def _read_vec(stem, what):
    try:
        return read_vector(stem)
    except (VolumeFormatError, OSError) as exc:
        raise ServiceError(f"cannot read {what} {stem}: {exc}") from exc


def _same_grid(*named):
    shapes = {name: a.shape[-3:] for name, a in named}
    if len(set(shapes.values())) != 1:
        desc = ", ".join(f"{k} {v}" for k, v in shapes.items())
        raise ServiceError(f"grid mismatch: {desc}")


def _write_json(path: Path, payload: dict) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=float) + "\n")
    return str(path)


def register(req: RegisterRequest, callback=None) -> RegisterResponse:
    ref = _read(req.reference, "reference")
    tpl = _read(req.template, "template")
    _same_grid(("reference", ref), ("template", tpl))
    try:
        make_grid(ref.shape)
    except ValueError as exc:
        raise ServiceError(str(exc)) from exc
    cfg = SolverConfig(
        reg=RegularizationConfig(req.beta, req.gamma), timegrid=TimeGrid(req.nt),
        gtol=req.gtol, max_newton=req.max_newton, max_pcg=req.max_pcg,
        continuation=Continuation(enabled=req.continuation and req.beta0 > req.beta,
                                  beta0=req.beta0),
        variant=req.interp, backend=req.deriv, dtype=req.dtype)
    v, report = gauss_newton_solve(tpl, ref, cfg, callback=callback)

    out = Path(req.out)
    outputs = {f"velocity_{i + 1}": str(p) for i, p in enumerate(write_vector(v, out / "velocity"))}
    dmap = metrics.compute_deformation_map(v, cfg.timegrid, cfg.variant)
    warped = solve_state(v, tpl.astype(v.dtype), cfg.timegrid, cfg.variant).final
    outputs["warped"] = str(write_volume(warped.astype(np.float32), out / "warped"))
    payload = report.to_dict()
    if req.labels_reference and req.labels_template:
        lref = _read(req.labels_reference, "reference labels")
        ltpl = _read(req.labels_template, "template labels")
        _same_grid(("reference", ref), ("reference labels", lref), ("template labels", ltpl))
        lwarp = metrics.warp_labels(ltpl, dmap)
        outputs["warped_labels"] = str(write_volume(lwarp, out / "warped_labels"))
        payload["dice_before"] = metrics.dice(lref, ltpl)
        payload["dice_after"] = metrics.dice(lref, lwarp)
    report_path = _write_json(out / "report.json", payload)
    return RegisterResponse(status=report.status, exit_code=EXIT_CODES.get(report.status, 1),
                            report_path=report_path, outputs=outputs, report=payload)


def warp(req: WarpRequest) -> WarpResponse:
    image = _read(req.image, "image")
    v = _read_vec(req.velocity, "velocity")
    _same_grid(("image", image), ("velocity", v))
    if req.direction == "backward":
        v = -v
    tg = TimeGrid(req.nt)
    if req.labels:
        dmap = metrics.compute_deformation_map(v, tg, req.interp)
        result = metrics.warp_labels(image, dmap).astype(np.uint16)
    else:
        result = solve_state(v, image.astype(np.float32), tg, req.interp).final
    out = write_volume(result, req.out)
    report = _write_json(out.with_suffix(".report.json"), {
        "command": "warp", "direction": req.direction, "labels": req.labels,
        "nt": req.nt, "interp": req.interp, "output": str(out)})
    return WarpResponse(output=str(out), report_path=report)


def synthesize(req: SynthRequest) -> SynthResponse:
    grid = make_grid((req.size,) * 3)
    case = synth.make_case(grid, req.case, req.seed, req.amplitude, req.kmax, req.nt,
                           labels=req.labels)
    out = Path(req.out)
    outputs = {
        "reference": str(write_volume(case["reference"], out / "reference")),
        "template": str(write_volume(case["template"], out / "template")),
    }
    for i, p in enumerate(write_vector(case["velocity"], out / "velocity_true")):
        outputs[f"velocity_true_{i + 1}"] = str(p)
    if req.labels:
        outputs["labels_reference"] = str(write_volume(case["labels_reference"], out / "labels_reference"))
        outputs["labels_template"] = str(write_volume(case["labels_template"], out / "labels_template"))
    report = _write_json(out / "synth.json", {"command": "synth", **req.model_dump(),
                                              "outputs": outputs})
    return SynthResponse(outputs=outputs, report_path=report)


def run_bench(req: BenchRequest) -> BenchResponse:
    dtype = "float32" if req.precision == "f32" else "float64"
    extra = {"kind": req.kind}
    if req.kind == "deriv":
        rows = bench.derivative_accuracy_sweep(req.size, req.backend, dtype)
    elif req.kind == "interp":
        rows = [bench.interp_accuracy_bench(req.size, req.variant, req.seed, req.magnitude, req.reps)]
    elif req.kind == "advect":
        rows = [bench.advect_roundtrip_bench(req.size, req.variant)]
    else:
        model = bench.IntensityModel(req.peak_gflops, req.peak_gbs)
        kernels = req.kernels or list(bench.KERNELS)
        unknown = set(kernels) - set(bench.KERNELS)
        if unknown:
            raise ServiceError(f"unknown kernels {sorted(unknown)}")
        reports = [bench.throughput_bench(k, req.size, req.reps, req.seed, model) for k in kernels]
        extra.update(device_intensity=model.device_intensity, intensity_model=model.table(),
                     reference_device=bench.REFERENCE_DEVICE)
        summary = bench.write_reports(reports, req.csv, req.json_path, extra)
        return BenchResponse(rows=summary["rows"], summary=extra)
    summary = bench.write_reports(rows, req.csv, req.json_path, extra)
    return BenchResponse(rows=summary["rows"], summary=extra)


def compute_metrics(req: MetricsRequest) -> MetricsResponse:
    if req.kind == "dice":
        if not (req.a and req.b):
            raise ServiceError("dice needs --a and --b label maps")
        a, b = _read(req.a, "label map"), _read(req.b, "label map")
        _same_grid(("a", a), ("b", b))
        try:
            value = metrics.dice(a, b, req.labels)
        except ValueError as exc:
            raise ServiceError(str(exc)) from exc
        resp = MetricsResponse(kind="dice", value=value)
    elif req.kind == "mismatch":
        if not (req.final and req.reference and req.template):
            raise ServiceError("mismatch needs --final, --reference and --template")
        f, r, t = (_read(p, n) for p, n in ((req.final, "final"), (req.reference, "reference"),
                                             (req.template, "template")))
        _same_grid(("final", f), ("reference", r), ("template", t))
        try:
            value = metrics.relative_mismatch(f, r, t)
        except ZeroDivisionError as exc:
            raise ServiceError(str(exc)) from exc
        resp = MetricsResponse(kind="mismatch", value=value)
    else:
        if not req.velocity:
            raise ServiceError("detf needs --velocity")
        v = _read_vec(req.velocity, "velocity")
        dmap = metrics.compute_deformation_map(v, TimeGrid(req.nt), InterpVariant(req.interp))
        _, stats = metrics.det_deformation_gradient(dmap, req.deriv)
        resp = MetricsResponse(kind="detf", stats=vars(stats))
    if req.out:
        _write_json(Path(req.out), resp.model_dump())
    return resp
