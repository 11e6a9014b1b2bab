"""Synthetic registration problems (stand-ins for clinical data)."""
from __future__ import annotations

import numpy as np

from .grid import Grid
from .interp import InterpVariant
from .transport import TimeGrid, solve_state


def sinsq(grid: Grid, dtype=np.float32) -> np.ndarray:
    """``(sin^2(8 x1) + sin^2(2 x2) + sin^2(4 x3)) / 3``."""
    x = grid.coords()
    return ((np.sin(8 * x[0]) ** 2 + np.sin(2 * x[1]) ** 2 + np.sin(4 * x[2]) ** 2) / 3).astype(dtype)


def _periodic_offset(x, c):
    return np.angle(np.exp(1j * (x - c)))


def blobs(grid: Grid, seed: int = 0, n_blobs: int = 6, width=(0.35, 0.7),
          dtype=np.float32) -> np.ndarray:
    """Smooth periodic mixture of Gaussian bumps with values in [0, 1]."""
    rng = np.random.default_rng(seed)
    x = grid.coords()
    img = np.zeros(grid.dims)
    for _ in range(n_blobs):
        c = rng.uniform(0.0, 2 * np.pi, size=3)
        sigma = rng.uniform(*width)
        amp = rng.uniform(0.5, 1.0)
        r2 = sum(_periodic_offset(x[i], c[i]) ** 2 for i in range(3))
        img += amp * np.exp(-0.5 * r2 / sigma ** 2)
    img /= img.max()
    return img.astype(dtype)


def bandlimited_velocity(grid: Grid, seed: int = 0, kmax: int = 2, amplitude: float = 0.3,
                         dtype=np.float32) -> np.ndarray:
    """Random smooth velocity with modes ``|k_i| <= kmax``, scaled to ``max|v| = amplitude``."""
    if 2 * kmax >= min(grid.dims):
        raise ValueError(f"kmax={kmax} is not resolved on {grid.dims}")
    rng = np.random.default_rng(seed)
    ks = [(a, b, c) for a in range(-kmax, kmax + 1) for b in range(-kmax, kmax + 1)
          for c in range(-kmax, kmax + 1) if (a, b, c) != (0, 0, 0)]
    spec = np.zeros((3,) + grid.dims, dtype=np.complex128)
    for comp in range(3):
        for k in ks:
            weight = 1.0 / (1.0 + sum(ki * ki for ki in k))
            a, b = rng.normal(size=2) * weight
            # a cos(k.x) + b sin(k.x)
            spec[(comp,) + k] += 0.5 * (a - 1j * b)
            spec[(comp,) + tuple(-ki for ki in k)] += 0.5 * (a + 1j * b)
    v = np.fft.ifftn(spec, axes=(1, 2, 3)).real * grid.size
    v *= amplitude / np.abs(v).max()
    return v.astype(dtype)


def two_label_map(image: np.ndarray, thresholds=(0.3, 0.6)) -> np.ndarray:
    labels = np.zeros(image.shape, dtype=np.uint16)
    labels[image > thresholds[0]] = 1
    labels[image > thresholds[1]] = 2
    return labels


def make_case(grid: Grid, case: str = "blobs", seed: int = 0, amplitude: float = 0.3,
              kmax: int = 2, nt: int = 4, variant=InterpVariant.BSPLINE, labels: bool = False):
    """Reference image, ground-truth velocity and template ``= reference transported by v*``."""
    if case == "blobs":
        reference = blobs(grid, seed)
    elif case == "sinsq":
        reference = sinsq(grid)
    else:
        raise ValueError(f"unknown case {case!r}")
    v_true = bandlimited_velocity(grid, seed + 1, kmax, amplitude)
    template = solve_state(v_true, reference, TimeGrid(nt), variant).final
    out = {"reference": reference, "template": template.astype(np.float32), "velocity": v_true}
    if labels:
        out["labels_reference"] = two_label_map(reference)
        out["labels_template"] = two_label_map(out["template"])
    return out
