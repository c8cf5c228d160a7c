import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import i0

from shrinkerkit.entropy import (
    TailNotConverged, entropy, f_functional, g_derivatives, hessian_G_at_critical,
    monotonicity_audit,
)
from shrinkerkit.flow import Controller, run
from shrinkerkit.geometry import SpaceTimePoint
from shrinkerkit.shrinkers import canonical_shrinker

from shapes import circle, sphere

LAMBDA_1 = np.sqrt(2 * np.pi / np.e)


def sphere_F(rho, a, t):
    # azimuth and polar angle integrated in closed form
    k = a * rho / (2 * t)
    shape = np.sinh(k) / k if k > 0 else 1.0
    return rho**2 / t * shape * np.exp(-(rho**2 + a**2) / (4 * t))


def circle_F(rho, a, t):
    return (4 * np.pi * t) ** -0.5 * 2 * np.pi * rho * i0(a * rho / (2 * t)) \
        * np.exp(-(rho**2 + a**2) / (4 * t))


@pytest.fixture(scope="module")
def fine_sphere():
    return sphere(1.3, 801)


@pytest.fixture(scope="module")
def fine_circle():
    return circle(1.3, 1024)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0, 2), t=st.floats(0.2, 5), off_axis=st.booleans())
def test_sphere_density_closed_form(fine_sphere, a, t, off_axis):
    x0 = (0.0, a, 0.0) if off_axis else (a, 0.0, 0.0)
    assert f_functional(fine_sphere, x0, t) == pytest.approx(sphere_F(1.3, a, t), rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0, 2), t=st.floats(0.2, 5), phi=st.floats(0, 2 * np.pi))
def test_circle_density_closed_form(fine_circle, a, t, phi):
    x0 = (a * np.cos(phi), a * np.sin(phi))
    assert f_functional(fine_circle, x0, t) == pytest.approx(circle_F(1.3, a, t), rel=1e-6)


@pytest.mark.parametrize("t", [0.5, 1.0, 4.0])
@pytest.mark.parametrize("shift", [0.0, 0.3, 1.0])
def test_plane_density(t, shift):
    S = canonical_shrinker("plane", analytic=False)
    # shifting the center off the plane multiplies by the normal Gaussian factor
    val = f_functional(S, (shift, 0.0, 0.0), t, tail_tol=None)
    assert val == pytest.approx(np.exp(-shift**2 / (4 * t)), rel=1e-6)


def test_plane_density_in_plane_shift():
    S = canonical_shrinker("plane", analytic=False, extent=20.0)
    assert f_functional(S, (0.0, 2.0, 0.0), 1.0, tail_tol=None) == pytest.approx(1.0, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.5, 2.0), t=st.floats(0.5, 2.0))
def test_density_scale_invariance(fine_sphere, lam, t):
    big = sphere(1.3 * lam, 801)
    assert f_functional(big, None, lam**2 * t) == pytest.approx(
        f_functional(fine_sphere, None, t), rel=1e-9)


def test_tail_guard():
    S = canonical_shrinker("plane", analytic=False, extent=3.0)
    with pytest.raises(TailNotConverged):
        f_functional(S, None, 1.0)


@pytest.mark.parametrize("t0", [0.0, -1.0])
def test_nonpositive_scale(t0):
    with pytest.raises(ValueError):
        f_functional(sphere(2.0), None, t0)


def test_center_dimension_checked():
    with pytest.raises(ValueError):
        f_functional(sphere(2.0), (0.0, 0.0), 1.0)


def test_spacetime_point_center(fine_sphere):
    X = SpaceTimePoint((0.4, 0.0, 0.0), 2.0)
    assert f_functional(fine_sphere, X) == pytest.approx(sphere_F(1.3, 0.4, 2.0), rel=1e-6)


@pytest.mark.parametrize("kind,n,value", [
    ("plane", 2, 1.0),
    ("sphere", 2, 4 / np.e),
    ("circle", 1, LAMBDA_1),
    ("cylinder", 2, LAMBDA_1),
])
def test_entropy_values(kind, n, value):
    S = canonical_shrinker(kind, n, resolution=1025, analytic=False,
                           extent=20.0 if kind == "cylinder" else 10.0)
    res = entropy(S)
    assert res.value == pytest.approx(value, abs=1e-4)
    assert res.value >= f_functional(S, None, 1.0, tail_tol=None) - 1e-12


def test_entropy_maximizer_of_small_sphere():
    # the best scale for a sphere of radius rho is t0 = rho^2 / 4
    res = entropy(sphere(1.0, 401))
    assert res.value == pytest.approx(4 / np.e, abs=1e-4)
    assert res.t0 == pytest.approx(0.25, rel=1e-3)
    np.testing.assert_allclose(res.center, 0.0, atol=1e-3)


def test_entropy_is_deterministic():
    S = canonical_shrinker("sphere", analytic=False)
    a, b = entropy(S, seed=3), entropy(S, seed=3)
    assert a.value == b.value and a.t0 == b.t0


def test_g_derivatives_match_differences():
    S = sphere(1.7, 801)
    f = np.ones(S.size)
    x0, t0, h = (0.2, 0.0, 0.0), 1.3, 1e-5
    g = g_derivatives(S, f, x0, t0)
    assert g.value == pytest.approx(sphere_F(1.7, 0.2, 1.3), rel=1e-6)
    dt = (sphere_F(1.7, 0.2, t0 + h) - sphere_F(1.7, 0.2, t0 - h)) / (2 * h)
    ds = (sphere_F(1.7 + h, 0.2, t0) - sphere_F(1.7 - h, 0.2, t0)) / (2 * h)
    da = (sphere_F(1.7, 0.2 + h, t0) - sphere_F(1.7, 0.2 - h, t0)) / (2 * h)
    assert g.dt0 == pytest.approx(dt, rel=1e-5)
    assert g.ds == pytest.approx(ds, rel=1e-4)
    assert g.grad_x0[0] == pytest.approx(da, rel=1e-5)


def test_specimen_is_critical_for_G(specimen_spectrum):
    Sigma, f = specimen_spectrum.truncated(20.0)
    g = g_derivatives(Sigma, f)
    assert abs(g.dt0) < 1e-8
    assert abs(g.ds) < 1e-6
    assert np.max(np.abs(g.grad_x0)) < 1e-8


def test_hessian_f_entry(specimen_spectrum):
    sp = specimen_spectrum
    Sigma, f = sp.truncated(20.0)
    rep = hessian_G_at_critical(Sigma, f)
    assert rep.orthogonal
    assert rep.negative_definite
    assert rep.f_entry == pytest.approx(sp.mu / (4 * np.pi), rel=1e-5)


def test_monotonicity_on_shrinking_sphere():
    tr = run(sphere(2.0, 201), -0.5, Controller(save_times=(-0.9, -0.8, -0.7, -0.6, -0.5)))
    rep = monotonicity_audit(tr, np.zeros(3), 0.0)
    assert rep.drift < 1e-6
    with pytest.raises(ValueError):
        monotonicity_audit(tr, np.zeros(3), -0.7)
