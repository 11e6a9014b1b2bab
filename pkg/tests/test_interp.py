import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rel
from veloreg import counting, make_grid
from veloreg.bench import perturbed_points, table3_function
from veloreg.grid import TWO_PI, wrap
from veloreg.interp import (BSPLINE_POLE, CoefficientField, DeparturePoints, InterpolationError,
                            InterpVariant, interp_eval, interpolate, nearest, prefilter_bspline,
                            prefilter_taps, prepare)

VARIANTS = list(InterpVariant)


def _bspline_symbol(n):
    w = TWO_PI * np.fft.fftfreq(n)
    return (4.0 + 2.0 * np.cos(w)) / 6.0


def spectral_prefilter(f):
    """Exact periodic prefilter: divide by the sampled cubic B-spline symbol per axis."""
    fh = np.fft.fftn(f.astype(np.float64))
    n1, n2, n3 = f.shape
    sym = (_bspline_symbol(n1)[:, None, None] * _bspline_symbol(n2)[None, :, None]
           * _bspline_symbol(n3)[None, None, :])
    return np.fft.ifftn(fh / sym).real


def test_taps_match_inverse_filter():
    taps = prefilter_taps()
    assert taps.shape == (15,)
    assert taps.sum() == pytest.approx(1.0, abs=1e-14)
    z = BSPLINE_POLE
    raw = 6 * z / (z * z - 1) * z ** np.abs(np.arange(-7, 8))
    norm = raw.sum()
    assert taps[7] * norm == pytest.approx(math.sqrt(3.0), rel=1e-12)
    ratios = taps[8:] / taps[7:-1]
    assert np.allclose(np.abs(ratios), 0.26795, atol=1e-5)


def residual_taps():
    """``taps * [1, 4, 1] / 6 - delta``: what 15 taps leave of the exact inverse."""
    r = np.convolve(prefilter_taps(), np.array([1.0, 4.0, 1.0]) / 6.0)
    r[len(r) // 2] -= 1.0
    return r


def test_truncation_residual_is_small():
    r = residual_taps()
    assert abs(r.sum()) <= 1e-15  # unit DC gain
    assert np.abs(r).sum() <= 1.5e-4
    # nonzero only where the truncated tail would have cancelled
    assert np.count_nonzero(np.abs(r) > 1e-14) == 5


def test_prefilter_matches_spectral_division(g32):
    x = g32.coords()
    f = np.sin(x[0]) * np.cos(2 * x[1]) + 0.5 * np.sin(3 * x[2] + x[0])
    c = prefilter_bspline(f).values
    # per axis the gap is bounded by sum|r| * max(1/B) = 1.5e-4 * 3
    assert rel(c, spectral_prefilter(f)) <= 3 * 4.5e-4


def test_prefilter_constant(g16):
    f = np.full(g16.dims, 2.5, np.float32)
    assert np.allclose(prefilter_bspline(f).values, 2.5, atol=1e-6)


def _smooth(x):
    return np.sin(x[0]) * np.cos(2 * x[1]) + np.sin(x[2])


def test_bspline_nodes_match_residual_prediction(g64):
    # at the nodes, evaluate(prefilter(f)) - f is exactly the separable residual filter
    f = _smooth(g64.coords())
    out = interp_eval(prefilter_bspline(f), DeparturePoints.identity(g64), "bspline")
    n = g64.dims[0]
    t = np.zeros(n)
    taps = prefilter_taps()
    for j, tj in zip(range(-7, 8), taps):
        t[j % n] += tj
    sym1 = np.fft.fft(t) * _bspline_symbol(n)
    sym = sym1[:, None, None] * sym1[None, :, None] * sym1[None, None, :]
    predicted = np.fft.ifftn(np.fft.fftn(f) * (sym - 1)).real
    assert rel(out - f, predicted) <= 1e-6


@pytest.mark.xfail(strict=True, reason="15-tap truncation leaves a ~2e-5 node residual "
                                       "even for sin(x1); see decisions ledger")
def test_bspline_interpolation_condition(g64):
    f = _smooth(g64.coords())
    out = interp_eval(prefilter_bspline(f), DeparturePoints.identity(g64), "bspline")
    assert rel(out, f) <= 1e-5


@pytest.mark.parametrize("variant", ["linear", "lagrange"])
def test_nodes_reproduced_exactly(g16, rng, variant):
    f = rng.standard_normal(g16.dims).astype(np.float32)
    out = interp_eval(f, DeparturePoints.identity(g16), variant)
    assert np.array_equal(out, f)


@pytest.mark.parametrize("variant", VARIANTS)
def test_partition_of_unity(g16, rng, variant):
    f = np.ones(g16.dims, np.float32)
    pts = rng.uniform(0, TWO_PI, size=(3, 500))
    assert np.abs(interpolate(f, pts, variant) - 1).max() <= 1e-6


@pytest.mark.parametrize("variant", VARIANTS)
def test_linearity(g16, rng, variant):
    f, h = rng.standard_normal((2,) + g16.dims)
    pts = rng.uniform(0, TWO_PI, size=(3, 400))
    lhs = interpolate(2.0 * f - 3.0 * h, pts, variant)
    rhs = 2.0 * interpolate(f, pts, variant) - 3.0 * interpolate(h, pts, variant)
    assert rel(lhs, rhs) <= 1e-5


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, TWO_PI - 1e-9), min_size=3, max_size=3),
       st.sampled_from(VARIANTS))
def test_shift_periodicity(p, variant):
    g = make_grid((16, 16, 16))
    f = np.random.default_rng(0).standard_normal(g.dims)
    src = prepare(f, variant)
    a = np.array(p)[:, None]
    b = wrap(a + np.array([[TWO_PI], [0.0], [0.0]]))
    assert interp_eval(src, a, variant)[0] == pytest.approx(interp_eval(src, b, variant)[0],
                                                            abs=1e-9)


def test_stacked_matches_individual(g16, rng):
    v = rng.standard_normal((3,) + g16.dims)
    pts = rng.uniform(0, TWO_PI, size=(3, 100))
    coeffs = prefilter_bspline(v)
    with counting() as c:
        stacked = interp_eval(coeffs, pts, "bspline")
    assert c.n_interp == 3
    for i in range(3):
        assert np.allclose(stacked[i], interpolate(v[i], pts, "bspline"))


def _order_ratio(variant, exact_prefilter=False):
    errs = []
    for n in (64, 128):
        g = make_grid((n, n, n))
        pts = perturbed_points(g, seed=42)
        f = _smooth(g.coords())
        if exact_prefilter:
            out = interp_eval(CoefficientField(spectral_prefilter(f)), pts, variant)
        else:
            out = interpolate(f, pts, variant)
        errs.append(rel(out, _smooth(pts.coords)))
    return errs[0] / errs[1]


@pytest.mark.parametrize("variant, lo, hi", [("linear", 3.5, 4.5), ("lagrange", 12, 20)])
def test_convergence_order(variant, lo, hi):
    assert lo <= _order_ratio(variant) <= hi


def test_bspline_kernel_is_cubic_order():
    assert 12 <= _order_ratio("bspline", exact_prefilter=True) <= 20


@pytest.mark.xfail(strict=True, reason="truncated prefilter residual is O(h^2) and dominates "
                                       "the cubic kernel error; see decisions ledger")
def test_bspline_pipeline_convergence_order():
    assert 12 <= _order_ratio("bspline") <= 20


def test_error_ordering_table3(g64):
    pts = perturbed_points(g64, seed=42)
    f = table3_function(g64.coords()).astype(np.float32)
    exact = table3_function(pts.coords)
    err = {v: rel(interpolate(f, pts, v), exact) for v in VARIANTS}
    assert err[InterpVariant.BSPLINE] <= err[InterpVariant.LAGRANGE] <= err[InterpVariant.LINEAR]


def test_bspline_requires_coefficients(g16):
    with pytest.raises(InterpolationError):
        interp_eval(np.zeros(g16.dims), np.zeros((3, 1)), "bspline")
    with pytest.raises(InterpolationError):
        interp_eval(CoefficientField(np.zeros(g16.dims)), np.zeros((3, 1)), "linear")


@pytest.mark.parametrize("bad", [np.nan, -0.1, TWO_PI])
def test_invalid_points(g16, bad):
    pts = np.zeros((3, 2))
    pts[1, 1] = bad
    with pytest.raises(InterpolationError):
        interp_eval(np.zeros(g16.dims), pts, "linear")


def test_nearest_keeps_labels(g16, rng):
    labels = rng.integers(0, 4, g16.dims).astype(np.uint16)
    disp = rng.uniform(-0.4, 0.4, (3,) + g16.dims) * g16.spacing[0]
    out = nearest(labels, DeparturePoints.from_displacement(g16, disp))
    assert out.dtype == np.uint16
    assert np.array_equal(out, labels)
