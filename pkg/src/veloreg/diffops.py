"""First-order derivatives and the spectral regularization operator.

Two interchangeable first-derivative backends are provided: an 8th-order
central finite-difference stencil and FFT-based spectral differentiation.
The regularization operator ``A = -Lap - gamma grad div`` and its inverse are
always applied spectrally.
"""
from __future__ import annotations

import enum
import functools
import os
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from .counters import record, timed
from .grid import Grid, grid_of

# f'(x) ~ sum_j c_j (f(x + jh) - f(x - jh)) / h
FD8_COEFFS = (4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0)


def _fd8_weights() -> np.ndarray:
    w = np.zeros(9)
    for j, c in enumerate(FD8_COEFFS, start=1):
        w[4 + j] = c
        w[4 - j] = -c
    return w


FD8_WEIGHTS = _fd8_weights()


def fft_workers() -> int:
    return int(os.environ.get("VELOREG_THREADS", "1") or 1)


class DerivativeBackend(str, enum.Enum):
    FD8 = "fd8"
    SPECTRAL = "spectral"


@dataclass(frozen=True)
class RegularizationConfig:
    beta: float = 5e-4
    gamma: float = 1e-4

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")


# -- finite differences ------------------------------------------------------

def fd8_partial(f: np.ndarray, axis: int, grid: Grid | None = None) -> np.ndarray:
    """8th-order central difference along ``axis`` (0, 1 or 2), periodic."""
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    grid = grid or grid_of(f)
    grid.check(f)
    with timed("fd8"):
        out = ndimage.correlate1d(f, FD8_WEIGHTS / grid.spacing[axis],
                                  axis=axis, mode="wrap")
    record(n_first_order=1, n_fd_first_order=1)
    return out


def fd8_gradient(f: np.ndarray, grid: Grid | None = None) -> np.ndarray:
    return np.stack([fd8_partial(f, i, grid) for i in range(3)])


def fd8_divergence(u: np.ndarray, grid: Grid | None = None) -> np.ndarray:
    out = fd8_partial(u[0], 0, grid)
    out += fd8_partial(u[1], 1, grid)
    out += fd8_partial(u[2], 2, grid)
    return out


# -- spectral ----------------------------------------------------------------

@functools.lru_cache(maxsize=16)
def wavenumbers(dims: tuple[int, int, int], nyquist: bool = True):
    """Integer wavenumbers broadcastable against an rfftn spectrum.

    The domain length is 2pi, so wavenumbers are plain integers. With
    ``nyquist=False`` the Nyquist entries are zeroed, which is the symbol
    of an odd (first-derivative) operator on an even grid.
    """
    n1, n2, n3 = dims
    ks = [sfft.fftfreq(n1, 1.0 / n1), sfft.fftfreq(n2, 1.0 / n2),
          sfft.rfftfreq(n3, 1.0 / n3)]
    if not nyquist:
        ks[0][n1 // 2] = 0.0
        ks[1][n2 // 2] = 0.0
        ks[2][n3 // 2] = 0.0
    k1 = ks[0][:, None, None]
    k2 = ks[1][None, :, None]
    k3 = ks[2][None, None, :]
    for k in (k1, k2, k3):
        k.flags.writeable = False
    return k1, k2, k3


def _complex_dtype(dtype) -> np.dtype:
    return np.complex64 if np.dtype(dtype) == np.float32 else np.complex128


def _rfft(f):
    return sfft.rfftn(f, workers=fft_workers())


def _irfft(fh, dims, dtype):
    return sfft.irfftn(fh, s=dims, workers=fft_workers()).astype(dtype, copy=False)


def spectral_partial(f: np.ndarray, axis: int, grid: Grid | None = None) -> np.ndarray:
    grid = grid or grid_of(f)
    grid.check(f)
    k = wavenumbers(grid.dims, nyquist=False)[axis]
    with timed("fft"):
        fh = _rfft(f)
        fh *= (1j * k).astype(_complex_dtype(f.dtype))
        out = _irfft(fh, grid.dims, f.dtype)
    record(n_first_order=1, n_fft_first_order=1)
    return out


def spectral_gradient(f: np.ndarray, grid: Grid | None = None) -> np.ndarray:
    """Gradient from a single forward transform and three inverse transforms."""
    grid = grid or grid_of(f)
    grid.check(f)
    ks = wavenumbers(grid.dims, nyquist=False)
    cdt = _complex_dtype(f.dtype)
    with timed("fft"):
        fh = _rfft(f)
        out = np.stack([_irfft(fh * (1j * k).astype(cdt), grid.dims, f.dtype) for k in ks])
    record(n_first_order=3, n_fft_first_order=3)
    return out


def spectral_divergence(u: np.ndarray, grid: Grid | None = None) -> np.ndarray:
    grid = grid or grid_of(u)
    grid.check(u)
    ks = wavenumbers(grid.dims, nyquist=False)
    cdt = _complex_dtype(u.dtype)
    with timed("fft"):
        acc = None
        for i, k in enumerate(ks):
            term = _rfft(u[i]) * (1j * k).astype(cdt)
            acc = term if acc is None else acc + term
        out = _irfft(acc, grid.dims, u.dtype)
    record(n_first_order=3, n_fft_first_order=3)
    return out


def spectral_laplacian(f: np.ndarray, grid: Grid | None = None) -> np.ndarray:
    """Scalar Laplacian with the same (Nyquist-zeroed) symbol as div(grad)."""
    grid = grid or grid_of(f)
    k1, k2, k3 = wavenumbers(grid.dims, nyquist=False)
    with timed("fft"):
        fh = _rfft(f)
        fh *= -(k1 ** 2 + k2 ** 2 + k3 ** 2)
        out = _irfft(fh, grid.dims, f.dtype)
    record(n_fft_other=1)
    return out


def gradient(f: np.ndarray, backend=DerivativeBackend.FD8, grid: Grid | None = None) -> np.ndarray:
    if DerivativeBackend(backend) is DerivativeBackend.FD8:
        return fd8_gradient(f, grid)
    return spectral_gradient(f, grid)


def divergence(u: np.ndarray, backend=DerivativeBackend.FD8, grid: Grid | None = None) -> np.ndarray:
    if DerivativeBackend(backend) is DerivativeBackend.FD8:
        return fd8_divergence(u, grid)
    return spectral_divergence(u, grid)


# -- regularization operator --------------------------------------------------

def _reg_symbols(dims):
    k1, k2, k3 = wavenumbers(dims, nyquist=True)
    ksq = k1 ** 2 + k2 ** 2 + k3 ** 2
    kodd = wavenumbers(dims, nyquist=False)
    kodd_sq = kodd[0] ** 2 + kodd[1] ** 2 + kodd[2] ** 2
    return ksq, kodd, kodd_sq


def apply_regularization(v: np.ndarray, cfg: RegularizationConfig) -> np.ndarray:
    """Apply ``A v`` with symbol ``|k|^2 I + gamma k k^T`` (beta not applied).

    The zero-frequency mode is passed through unchanged.
    """
    grid = grid_of(v)
    grid.check(v)
    ksq, kodd, _ = _reg_symbols(grid.dims)
    with timed("fft"):
        vh = [_rfft(v[i]) for i in range(3)]
        div = kodd[0] * vh[0] + kodd[1] * vh[1] + kodd[2] * vh[2]
        out = np.empty_like(v)
        for i in range(3):
            wh = ksq * vh[i] + cfg.gamma * kodd[i] * div
            wh[0, 0, 0] = vh[i][0, 0, 0]
            out[i] = _irfft(wh, grid.dims, v.dtype)
    record(n_fft_other=3)
    return out


def apply_inverse_regularization(r: np.ndarray, cfg: RegularizationConfig) -> np.ndarray:
    """Apply ``(beta A)^-1 r`` using the closed-form per-frequency inverse."""
    grid = grid_of(r)
    grid.check(r)
    ksq, kodd, kodd_sq = _reg_symbols(grid.dims)
    safe = np.where(ksq == 0, 1.0, ksq)
    inv_ksq = 1.0 / safe
    rank1 = cfg.gamma / (safe * (safe + cfg.gamma * kodd_sq))
    with timed("fft"):
        rh = [_rfft(r[i]) for i in range(3)]
        kr = kodd[0] * rh[0] + kodd[1] * rh[1] + kodd[2] * rh[2]
        out = np.empty_like(r)
        for i in range(3):
            wh = inv_ksq * rh[i] - rank1 * kodd[i] * kr
            wh[0, 0, 0] = rh[i][0, 0, 0]
            out[i] = _irfft(wh / cfg.beta, grid.dims, r.dtype)
    record(n_fft_other=3)
    return out
