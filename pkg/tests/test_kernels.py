import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from shrinkerkit import _kernels_py as py
from shrinkerkit import kernels

compiled = kernels.compiled
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")
BACKENDS = [pytest.param(py, id="python"),
            pytest.param(compiled, id="compiled", marks=needs_compiled)]


def _system(n, seed):
    rng = np.random.default_rng(seed)
    lower = rng.uniform(-1, 0, n)
    upper = rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    return lower, diag, upper, rng.normal(size=n)


@pytest.mark.parametrize("mod", BACKENDS)
@pytest.mark.parametrize("n", [3, 10, 257])
def test_tridiag_against_banded(mod, n):
    lower, diag, upper, rhs = _system(n, n)
    ab = np.vstack((np.r_[0.0, upper[:-1]], diag, np.r_[lower[1:], 0.0]))
    np.testing.assert_allclose(mod.tridiag_solve(lower, diag, upper, rhs),
                               solve_banded((1, 1), ab, rhs), rtol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS)
@pytest.mark.parametrize("n", [4, 33])
def test_cyclic_against_dense(mod, n):
    lower, diag, upper, rhs = _system(n, 100 + n)
    A = np.diag(diag) + np.diag(upper[:-1], 1) + np.diag(lower[1:], -1)
    A[0, -1] = lower[0]
    A[-1, 0] = upper[-1]
    np.testing.assert_allclose(mod.cyclic_tridiag_solve(lower, diag, upper, rhs),
                               np.linalg.solve(A, rhs), rtol=1e-10)


@pytest.mark.parametrize("mod", BACKENDS)
@pytest.mark.parametrize("periodic", [False, True])
def test_spline_against_scipy(mod, periodic):
    s = np.linspace(0, 2 * np.pi, 41)
    vals = np.column_stack((np.cos(s), np.sin(2 * s)))
    if periodic:
        vals[-1] = vals[0]
    q = np.linspace(0, 2 * np.pi, 333)
    ref = CubicSpline(s, vals, bc_type="periodic" if periodic else "natural")(q)
    np.testing.assert_allclose(mod.spline_eval(s, vals, q, periodic), ref, atol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS)
def test_polyline_distance_parallel_segments(mod):
    A = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    B = A + [0.5, 0.75]
    assert mod.polyline_distance(A, B) == pytest.approx(0.75)


@needs_compiled
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(5, 80),
       rotational=st.booleans(), periodic=st.booleans())
def test_curve_step_parity(seed, n, rotational, periodic):
    rng = np.random.default_rng(seed)
    u = np.linspace(0, np.pi, n)
    x = -np.cos(u) + 0.01 * rng.normal(size=n)
    y = np.sin(u) + 1.5
    if periodic:
        rotational = False
    ends = (kernels.END_CLAMPED, kernels.END_CLAMPED)
    a = py.curve_step(x, y, 1e-4, *ends, rotational, periodic)
    b = compiled.curve_step(x, y, 1e-4, *ends, rotational, periodic)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-14)


@needs_compiled
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 60), m=st.integers(2, 60))
def test_polyline_distance_parity(seed, n, m):
    rng = np.random.default_rng(seed)
    A = np.cumsum(rng.normal(size=(n, 2)), axis=0)
    B = np.cumsum(rng.normal(size=(m, 2)), axis=0) + 5
    assert compiled.polyline_distance(A, B) == pytest.approx(py.polyline_distance(A, B),
                                                             rel=1e-12, abs=1e-14)


def test_backend_reported():
    assert kernels.BACKEND in ("compiled", "python")
    if compiled is not None:
        assert kernels.BACKEND == "compiled"
