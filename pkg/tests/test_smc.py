import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinkerkit import smc as smc_mod
from shrinkerkit.flow import Controller, FlowTrace, run, self_similar_trace
from shrinkerkit.geometry import SpaceTimePoint, geometric_data, origin
from shrinkerkit.shrinkers import canonical_shrinker
from shrinkerkit.smc import (
    CorrespondenceLost, HypothesisFailed, convergence_order, curvature_ratio_audit,
    lower_bound_audit, max_principle_audit, smc, smc_barrier_coefficients,
    smc_evolution_residual,
)

from shapes import circle, sphere


def point(a, t0, n=2):
    return SpaceTimePoint((a,) + (0.0,) * n, t0)


@pytest.fixture(scope="module")
def unit_sphere_flow():
    # extinct at t = -3/4
    save = tuple(np.round(np.arange(-0.98, -0.80, 0.02), 12))
    return run(sphere(1.0, 201), -0.8, Controller(save_times=save))


@settings(max_examples=40, deadline=None)
@given(rho=st.floats(0.5, 3.0), a=st.floats(-2, 2), t0=st.floats(-1, 2), t=st.floats(-2, 1))
def test_sphere_closed_form(rho, a, t0, t):
    S = sphere(rho)
    vals = smc(S, point(a, t0), t).values
    x = S.pos[:, 0]
    expected = 4 * (t0 - t) / rho - rho + a * x / rho
    np.testing.assert_allclose(vals, expected, atol=1e-2 * (1 + abs(t0 - t)))


@settings(max_examples=30, deadline=None)
@given(shift=st.floats(-3, 3), a=st.floats(-2, 2), t0=st.floats(-1, 1))
def test_axial_translation_equivariance(shift, a, t0):
    S = sphere(1.5)
    moved = geometric_data(S.curve.with_nodes(S.pos + [shift, 0.0]))
    np.testing.assert_allclose(smc(moved, point(a + shift, t0), -1.0).values,
                               smc(S, point(a, t0), -1.0).values, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(t0=st.floats(-1, 1), dt=st.floats(-1, 1))
def test_time_gauge(t0, dt):
    # only t0 - t enters
    S = circle(1.2)
    np.testing.assert_allclose(smc(S, point(0.0, t0, 1), -1.0).values,
                               smc(S, point(0.0, t0 + dt, 1), -1.0 + dt).values, atol=1e-12)


@pytest.mark.parametrize("kind,n", [("sphere", 2), ("cylinder", 2), ("plane", 2),
                                    ("circle", 1), ("line", 1)])
def test_vanishes_on_self_similar_flows(kind, n):
    S = canonical_shrinker(kind, n, resolution=513, analytic=False)
    ss = self_similar_trace(S, [-1.0, -0.5, -0.1])
    for t, T in zip(ss.times, ss.surfaces):
        keep = smc_mod._boundary_layer(T, 5)
        vals = smc(T, origin(n), t).values
        assert np.max(np.abs(vals[keep])) <= 10 * T.h**2 / np.sqrt(-t)


def test_reference_point_checked():
    S = sphere(1.0)
    with pytest.raises(ValueError):
        smc(S, SpaceTimePoint((0.0, 0.5, 0.0), 0.0), -1.0)
    with pytest.raises(ValueError):
        smc(S, SpaceTimePoint((0.0, 0.0), 0.0), -1.0)


def test_barrier_field():
    S = sphere(1.0)
    np.testing.assert_allclose(smc_mod.barrier(S, -0.5), 1 + 1 + 4 * 0.5)


def test_unit_sphere_value():
    assert np.mean(smc(sphere(1.0, 401), origin(), -1.0).values) == pytest.approx(3.0, abs=1e-3)


def test_evolution_residual_on_sphere(unit_sphere_flow):
    res = smc_evolution_residual(unit_sphere_flow, origin())
    assert res.times.size == len(unit_sphere_flow.times) - 2
    # the slice spacing is fixed while S'' grows towards extinction, so compare
    # against the size of the reaction term |A|^2 S
    scale = [np.max(S.A2 * smc(S, origin(), t).values)
             for t, S in zip(unit_sphere_flow.times[1:-1], unit_sphere_flow.surfaces[1:-1])]
    assert np.max(res.max_norm / scale) < 0.06


def test_evolution_residual_converges():
    worst = []
    for count, spacing in ((101, 0.02), (201, 0.01)):
        save = tuple(np.round(np.arange(-1 + spacing, -0.9 + 1e-9, spacing), 12))
        tr = run(sphere(1.0, count), -0.9, Controller(save_times=save))
        worst.append(smc_evolution_residual(tr, origin()).worst)
    assert convergence_order(*worst) >= 0.9


def test_evolution_residual_needs_three_slices():
    tr = run(sphere(1.0), -0.99, Controller(save_times=(-0.99,)))
    with pytest.raises(ValueError):
        smc_evolution_residual(tr, origin())


def test_correspondence_lost():
    A, B = sphere(1.0), sphere(3.0)
    tr = FlowTrace([-1.0, -0.99, -0.98], [A, B, A], Controller())
    with pytest.raises(CorrespondenceLost):
        smc_evolution_residual(tr, origin())


def test_lower_bound_on_sphere(unit_sphere_flow):
    rep = lower_bound_audit(unit_sphere_flow, origin(), 3.0 - 1e-3, 0.0)
    assert rep.passed
    # S = -4t/r - r grows as the sphere shrinks
    assert np.all(np.diff(rep.margin) > 0)


def test_lower_bound_initial_hypothesis(unit_sphere_flow):
    with pytest.raises(HypothesisFailed) as info:
        lower_bound_audit(unit_sphere_flow, origin(), 4.0, 0.0)
    assert len(info.value.nodes) > 0


def test_ratio_constant_on_sphere(unit_sphere_flow):
    # about (0, 1/4) the field is 4/r and |A| = sqrt(2)/r, so the ratio is constant
    X0 = point(0.0, 0.25)
    rep = curvature_ratio_audit(unit_sphere_flow, X0, 1.0, 0.0, R=0.0)
    np.testing.assert_allclose(rep.ratio, np.sqrt(2) / (4 * rep.M), rtol=1e-3)
    assert rep.passed


def test_ratio_reports_sign_breaches():
    tr = run(sphere(2.0), -0.9, Controller(save_times=(-0.95, -0.9)))
    rep = curvature_ratio_audit(tr, point(0.0, -0.5), 1.0, 0.0, R=0.0)
    assert rep.breaches and not rep.passed


def _const(v):
    return lambda S, t: np.full(S.size, v)


def test_max_principle_constant(unit_sphere_flow):
    rep = max_principle_audit(unit_sphere_flow, _const(1.0), _const(0.0), _const(0.0), 0.0, 1.0)
    assert rep.passed
    with pytest.raises(HypothesisFailed):
        max_principle_audit(unit_sphere_flow, _const(1.0), _const(0.0), _const(0.0), 0.0, 1.5)


def test_max_principle_exponential(unit_sphere_flow):
    # u = e^t solves (d/dt - Delta) u = u
    rep = max_principle_audit(unit_sphere_flow, lambda S, t: np.full(S.size, np.exp(t)),
                              _const(0.0), _const(1.0), 0.0, np.exp(-1.0))
    assert rep.passed
    assert abs(rep.pde_residual) < 1e-3


def test_max_principle_linear_in_time(unit_sphere_flow):
    # u = -t stays above 0 but (d/dt - Delta) u = -1 < 0 breaks the supersolution hypothesis
    rep = max_principle_audit(unit_sphere_flow, lambda S, t: np.full(S.size, -t),
                              _const(0.0), _const(0.0), 0.0, 0.0)
    assert rep.conclusion_ok
    assert not rep.hypotheses_ok


def test_barrier_coefficients_on_sphere(unit_sphere_flow):
    U, A, B = smc_barrier_coefficients(unit_sphere_flow, origin(), 1.0)
    assert len(U) == len(unit_sphere_flow.times)
    # the meridian tangent is orthogonal to x on a centred sphere
    np.testing.assert_allclose(A[0], 0.0, atol=1e-12)
    rep = max_principle_audit(unit_sphere_flow, U, A, B, 0.0, float(np.min(U[0])))
    assert rep.passed
