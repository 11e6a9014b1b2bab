"""FastAPI application exposing the registration workflows."""
from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor

from fastapi import FastAPI, HTTPException

from .. import __version__
from . import handlers
from .schemas import (BenchRequest, BenchResponse, JobStatus, MetricsRequest, MetricsResponse,
                      RegisterRequest, RegisterResponse, SynthRequest, SynthResponse,
                      WarpRequest, WarpResponse)


def _guard(fn, req):
    try:
        return fn(req)
    except handlers.ServiceError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


class JobStore:
    """In-memory registry of asynchronous registration runs."""

    def __init__(self, workers: int = 1):
        self._jobs: dict[str, JobStatus] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers)

    def submit(self, req: RegisterRequest) -> JobStatus:
        job = JobStatus(id=uuid.uuid4().hex, state="queued")
        with self._lock:
            self._jobs[job.id] = job
        self._pool.submit(self._run, job.id, req)
        return job

    def _set(self, job_id, **changes):
        with self._lock:
            self._jobs[job_id] = self._jobs[job_id].model_copy(update=changes)

    def _run(self, job_id, req):
        self._set(job_id, state="running")
        try:
            self._set(job_id, state="done", result=handlers.register(req))
        except Exception as exc:  # surfaced through the job status
            self._set(job_id, state="failed", error=str(exc))

    def get(self, job_id) -> JobStatus | None:
        with self._lock:
            return self._jobs.get(job_id)


def create_app() -> FastAPI:
    app = FastAPI(title="veloreg", version=__version__)
    jobs = JobStore()

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/register", response_model=RegisterResponse)
    def register(req: RegisterRequest):
        return _guard(handlers.register, req)

    @app.post("/jobs/register", response_model=JobStatus, status_code=202)
    def submit(req: RegisterRequest):
        return jobs.submit(req)

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def job(job_id: str):
        status = jobs.get(job_id)
        if status is None:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        return status

    @app.post("/warp", response_model=WarpResponse)
    def warp(req: WarpRequest):
        return _guard(handlers.warp, req)

    @app.post("/synth", response_model=SynthResponse)
    def synth(req: SynthRequest):
        return _guard(handlers.synthesize, req)

    @app.post("/bench", response_model=BenchResponse)
    def bench(req: BenchRequest):
        return _guard(handlers.run_bench, req)

    @app.post("/metrics", response_model=MetricsResponse)
    def metrics(req: MetricsRequest):
        return _guard(handlers.compute_metrics, req)

    return app


app = create_app()
