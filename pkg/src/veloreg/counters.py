"""Exact operator counts and per-kernel wall time.

Counting is scoped with a context variable so that concurrent solves in
different threads or tasks keep separate tallies::

    with counting() as c:
        evaluate_objective(...)
    c.n_interp
"""
from __future__ import annotations

import contextlib
import contextvars
import time
from collections import defaultdict
from dataclasses import dataclass, field


@dataclass
class OperatorCounters:
    n_first_order: int = 0   # FD8 or spectral first-derivative applications
    n_fd_first_order: int = 0
    n_fft_first_order: int = 0
    n_fft_other: int = 0     # A, A^-1 and other spectral operators
    n_interp: int = 0        # scalar fields interpolated at scattered points
    n_prefilter: int = 0
    timings: dict = field(default_factory=lambda: defaultdict(float))

    def reset(self) -> None:
        self.n_first_order = self.n_fd_first_order = self.n_fft_first_order = 0
        self.n_fft_other = self.n_interp = self.n_prefilter = 0
        self.timings = defaultdict(float)

    def snapshot(self) -> dict:
        return {
            "n_first_order": self.n_first_order,
            "n_fd_first_order": self.n_fd_first_order,
            "n_fft_first_order": self.n_fft_first_order,
            "n_fft_other": self.n_fft_other,
            "n_interp": self.n_interp,
            "n_prefilter": self.n_prefilter,
        }

    def __iadd__(self, other: "OperatorCounters"):
        for k, v in other.snapshot().items():
            setattr(self, k, getattr(self, k) + v)
        for k, v in other.timings.items():
            self.timings[k] += v
        return self

    def __sub__(self, other: "OperatorCounters") -> dict:
        a, b = self.snapshot(), other.snapshot()
        return {k: a[k] - b[k] for k in a}


_active: contextvars.ContextVar[list] = contextvars.ContextVar("veloreg_counters", default=[])


@contextlib.contextmanager
def counting(counters: OperatorCounters | None = None):
    """Activate a counter set; nested scopes all receive increments."""
    counters = counters if counters is not None else OperatorCounters()
    token = _active.set(_active.get() + [counters])
    try:
        yield counters
    finally:
        _active.reset(token)


def record(**increments) -> None:
    for c in _active.get():
        for k, v in increments.items():
            setattr(c, k, getattr(c, k) + v)


@contextlib.contextmanager
def timed(kernel: str):
    scopes = _active.get()
    if not scopes:
        yield
        return
    t0 = time.perf_counter()
    try:
        yield
    finally:
        dt = time.perf_counter() - t0
        for c in scopes:
            c.timings[kernel] += dt
