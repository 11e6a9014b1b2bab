"""Command-line front end. Runs handlers in-process or forwards to a server."""
from __future__ import annotations

import argparse
import json
import os
import sys

from pydantic import BaseModel, ValidationError

EXIT_OK, EXIT_ERROR, EXIT_CAP = 0, 1, 2


def _threads_default():
    val = os.environ.get("VELOREG_THREADS")
    return int(val) if val else None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="veloreg", description=__doc__)
    p.add_argument("--threads", type=int, default=_threads_default(),
                   help="cap on worker threads (fallback: $VELOREG_THREADS)")
    p.add_argument("--server", default=None,
                   help="base URL of a running veloreg service; run locally when omitted")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("register", help="register a template to a reference")
    r.add_argument("--ref", required=True)
    r.add_argument("--tpl", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--beta", type=float, default=5e-4)
    r.add_argument("--gamma", type=float, default=1e-4)
    r.add_argument("--nt", type=int, default=4)
    r.add_argument("--interp", choices=["linear", "lagrange", "bspline"], default="bspline")
    r.add_argument("--deriv", choices=["fd8", "spectral"], default="fd8")
    r.add_argument("--gtol", type=float, default=5e-2)
    r.add_argument("--max-newton", type=int, default=50)
    r.add_argument("--max-pcg", type=int, default=500)
    r.add_argument("--no-continuation", action="store_true")
    r.add_argument("--precision", choices=["f32", "f64"], default="f32")
    r.add_argument("--labels-ref")
    r.add_argument("--labels-tpl")
    r.add_argument("--quiet", action="store_true")

    w = sub.add_parser("warp", help="transport an image or label map by a velocity")
    w.add_argument("--image", required=True)
    w.add_argument("--velocity", required=True, help="stem of <stem>_1..3 volumes")
    w.add_argument("--out", required=True)
    w.add_argument("--direction", choices=["forward", "backward"], default="forward")
    w.add_argument("--labels", action="store_true")
    w.add_argument("--nt", type=int, default=4)
    w.add_argument("--interp", choices=["linear", "lagrange", "bspline"], default="bspline")

    s = sub.add_parser("synth", help="write a synthetic registration problem")
    s.add_argument("--out", required=True)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--case", choices=["blobs", "sinsq"], default="blobs")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--amplitude", type=float, default=0.5)
    s.add_argument("--kmax", type=int, default=2)
    s.add_argument("--nt", type=int, default=4)
    s.add_argument("--labels", action="store_true")

    b = sub.add_parser("bench", help="accuracy and throughput benchmarks")
    b.add_argument("kind", choices=["deriv", "interp", "advect", "throughput"])
    b.add_argument("--size", type=int, default=64)
    b.add_argument("--backend", choices=["fd8", "spectral"], default="fd8")
    b.add_argument("--variant", choices=["linear", "lagrange", "bspline"], default="bspline")
    b.add_argument("--precision", choices=["f32", "f64"], default="f32")
    b.add_argument("--seed", type=int, default=42, help="perturbation seed (default 42)")
    b.add_argument("--magnitude", type=float, default=0.5,
                   help="perturbation bound in units of h (default 0.5)")
    b.add_argument("--reps", type=int, default=100)
    b.add_argument("--kernels", nargs="+")
    b.add_argument("--peak-gflops", type=float, default=14000.0)
    b.add_argument("--peak-gbs", type=float, default=900.0)
    b.add_argument("--csv")
    b.add_argument("--json")

    m = sub.add_parser("metrics", help="DICE, relative mismatch, det F")
    m.add_argument("kind", choices=["dice", "mismatch", "detf"])
    m.add_argument("--a")
    m.add_argument("--b")
    m.add_argument("--labels", type=int, nargs="+")
    m.add_argument("--final")
    m.add_argument("--reference")
    m.add_argument("--template")
    m.add_argument("--velocity")
    m.add_argument("--nt", type=int, default=4)
    m.add_argument("--interp", choices=["linear", "lagrange", "bspline"], default="bspline")
    m.add_argument("--deriv", choices=["fd8", "spectral"], default="fd8")
    m.add_argument("--out")

    sv = sub.add_parser("serve", help="run the HTTP service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    return p


def _request(args):
    """Map parsed flags to (endpoint, request model)."""
    from .service import schemas as S

    if args.command == "register":
        return "/register", S.RegisterRequest(
            reference=args.ref, template=args.tpl, out=args.out, beta=args.beta,
            gamma=args.gamma, nt=args.nt, interp=args.interp, deriv=args.deriv,
            gtol=args.gtol, max_newton=args.max_newton, max_pcg=args.max_pcg,
            continuation=not args.no_continuation,
            dtype="float32" if args.precision == "f32" else "float64",
            labels_reference=args.labels_ref, labels_template=args.labels_tpl)
    if args.command == "warp":
        return "/warp", S.WarpRequest(image=args.image, velocity=args.velocity, out=args.out,
                                      direction=args.direction, labels=args.labels,
                                      nt=args.nt, interp=args.interp)
    if args.command == "synth":
        return "/synth", S.SynthRequest(out=args.out, size=args.size, case=args.case,
                                        seed=args.seed, amplitude=args.amplitude,
                                        kmax=args.kmax, nt=args.nt, labels=args.labels)
    if args.command == "bench":
        return "/bench", S.BenchRequest(
            kind=args.kind, size=args.size, backend=args.backend, variant=args.variant,
            precision=args.precision, seed=args.seed, magnitude=args.magnitude,
            reps=args.reps, kernels=args.kernels, peak_gflops=args.peak_gflops,
            peak_gbs=args.peak_gbs, csv=args.csv, json=args.json)
    return "/metrics", S.MetricsRequest(
        kind=args.kind, a=args.a, b=args.b, labels=args.labels, final=args.final,
        reference=args.reference, template=args.template, velocity=args.velocity,
        nt=args.nt, interp=args.interp, deriv=args.deriv, out=args.out)


def _local(endpoint, req, quiet):
    from .service import handlers

    if endpoint == "/register":
        def progress(log):
            if not quiet:
                print(f"  beta={log.beta:.1e} it={log.iteration} J={log.objective:.4e} "
                      f"|g|rel={log.grad_rel:.3e} pcg={log.pcg_iters}", file=sys.stderr)
        return handlers.register(req, callback=progress)
    fn = {"/warp": handlers.warp, "/synth": handlers.synthesize,
          "/bench": handlers.run_bench, "/metrics": handlers.compute_metrics}[endpoint]
    return fn(req)


def _remote(server, endpoint, req: BaseModel) -> dict:
    import httpx

    resp = httpx.post(server.rstrip("/") + endpoint, json=req.model_dump(by_alias=True),
                      timeout=None)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise RuntimeError(f"server error {resp.status_code}: {detail}")
    return resp.json()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        if args.threads:
            from . import set_threads
            set_threads(args.threads)
        uvicorn.run("veloreg.service.app:app", host=args.host, port=args.port)
        return EXIT_OK

    try:
        endpoint, req = _request(args)
        if args.server:
            result = _remote(args.server, endpoint, req)
        else:
            from . import set_threads
            set_threads(args.threads)
            result = _local(endpoint, req, getattr(args, "quiet", False)).model_dump()
    except ValidationError as exc:
        print(f"error: invalid arguments: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    if args.command == "register":
        print(json.dumps({k: result[k] for k in ("status", "report_path", "outputs")}, indent=2))
        return result["exit_code"]
    if args.command == "bench":
        print(json.dumps(result, indent=2, default=float))
    else:
        print(json.dumps(result, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
