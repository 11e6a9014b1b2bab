"""Stationary-velocity diffeomorphic image registration on periodic grids."""
import os

# avoid probing an outdated system TBB at first parallel launch
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .counters import OperatorCounters, counting  # noqa: E402
from .diffops import DerivativeBackend, RegularizationConfig  # noqa: E402
from .grid import Grid, inner_product, make_grid, norm2  # noqa: E402
from .interp import InterpVariant  # noqa: E402

__version__ = "0.1.0"


def set_threads(n: int | None = None) -> int:
    """Cap internal data parallelism (numba kernels and FFT workers)."""
    import numba

    if n is None:
        n = int(os.environ.get("VELOREG_THREADS", "0") or 0) or numba.config.NUMBA_NUM_THREADS
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    os.environ["VELOREG_THREADS"] = str(n)
    return n


__all__ = [
    "DerivativeBackend", "Grid", "InterpVariant", "OperatorCounters",
    "RegularizationConfig", "counting", "inner_product", "make_grid", "norm2",
    "set_threads",
]
