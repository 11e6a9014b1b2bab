"""Request and response models shared by the HTTP API and the CLI."""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator

Interp = Literal["linear", "lagrange", "bspline"]
Deriv = Literal["fd8", "spectral"]


class RegisterRequest(BaseModel):
    reference: str
    template: str
    out: str
    beta: float = Field(5e-4, gt=0)
    gamma: float = Field(1e-4, ge=0)
    nt: int = Field(4, ge=1)
    interp: Interp = "bspline"
    deriv: Deriv = "fd8"
    gtol: float = Field(5e-2, gt=0, lt=1)
    max_newton: int = Field(50, ge=1)
    max_pcg: int = Field(500, ge=1)
    continuation: bool = True
    beta0: float = Field(1e-1, gt=0)
    dtype: Literal["float32", "float64"] = "float32"
    labels_reference: Optional[str] = None
    labels_template: Optional[str] = None


class RegisterResponse(BaseModel):
    status: str
    exit_code: int
    report_path: str
    outputs: dict[str, str]
    report: dict


class WarpRequest(BaseModel):
    image: str
    velocity: str = Field(description="stem of the three velocity volumes <stem>_1..3")
    out: str
    direction: Literal["forward", "backward"] = "forward"
    labels: bool = False
    nt: int = Field(4, ge=1)
    interp: Interp = "bspline"


class WarpResponse(BaseModel):
    output: str
    report_path: str


class SynthRequest(BaseModel):
    out: str
    size: int = 64
    case: Literal["blobs", "sinsq"] = "blobs"
    seed: int = 0
    amplitude: float = Field(0.5, ge=0)
    kmax: int = Field(2, ge=1)
    nt: int = Field(4, ge=1)
    labels: bool = False

    @field_validator("size")
    @classmethod
    def _even(cls, n):
        if n < 16 or n % 2:
            raise ValueError("size must be even and >= 16")
        return n


class SynthResponse(BaseModel):
    outputs: dict[str, str]
    report_path: str


class BenchRequest(BaseModel):
    kind: Literal["deriv", "interp", "advect", "throughput"]
    size: int = 64
    backend: Deriv = "fd8"
    variant: Interp = "bspline"
    precision: Literal["f32", "f64"] = "f32"
    seed: int = 42
    magnitude: float = Field(0.5, ge=0)
    reps: int = Field(100, ge=1)
    kernels: Optional[list[str]] = None
    peak_gflops: float = Field(14000.0, gt=0)
    peak_gbs: float = Field(900.0, gt=0)
    csv: Optional[str] = None
    json_path: Optional[str] = Field(None, alias="json")

    model_config = {"populate_by_name": True}


class BenchResponse(BaseModel):
    rows: list[dict]
    summary: dict = {}


class MetricsRequest(BaseModel):
    kind: Literal["dice", "mismatch", "detf"]
    a: Optional[str] = None
    b: Optional[str] = None
    labels: Optional[list[int]] = None
    final: Optional[str] = None
    reference: Optional[str] = None
    template: Optional[str] = None
    velocity: Optional[str] = None
    nt: int = Field(4, ge=1)
    interp: Interp = "bspline"
    deriv: Deriv = "fd8"
    out: Optional[str] = None


class MetricsResponse(BaseModel):
    kind: str
    value: Optional[float] = None
    stats: Optional[dict] = None


class JobStatus(BaseModel):
    id: str
    state: Literal["queued", "running", "done", "failed"]
    result: Optional[RegisterResponse] = None
    error: Optional[str] = None
