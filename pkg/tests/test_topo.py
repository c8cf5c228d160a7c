import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinkerkit.geometry import (
    Cone, ProfileCurve, axis_end, geometric_data, resample, truncated_end,
)
from shrinkerkit.shrinkers import canonical_shrinker
from shrinkerkit.topo import (
    PipelineConfig, PipelineReport, PreconditionFailed, Stage, mutual_crossings, polar_angle,
    radial_projection_check, separation_from, separation_report, star_shaped_check,
    theorem_pipeline,
)

from shapes import circle, sphere


def radial_cap(theta, gap=0.004, spacing=0.05):
    """Star-shaped cap ``rho(phi) (cos phi, sin phi)`` over ``[0, theta - gap]``.

    ``rho`` is even in ``phi`` so the cap meets the axis perpendicularly, and
    it blows up at ``theta``, so the cap is asymptotic to the cone of angle ``theta``.
    """
    phi = np.linspace(0, theta - gap, 20001)
    rho = 1 / np.cos(phi * np.pi / (2 * theta))
    P = rho[:, None] * np.column_stack((np.cos(phi), np.sin(phi)))
    P[0, 1] = 0.0
    t = P[-1] - P[-2]
    curve = ProfileCurve(P, axis_end(), truncated_end(t[1] / t[0], float(np.hypot(*P[-1]))))
    curve = resample(curve, spacing=spacing)
    S = geometric_data(curve)
    if np.median(S.x_dot_n) < 0:
        S = geometric_data(curve.flipped())
    return S


def test_sphere_star_shaped():
    rep = star_shaped_check(sphere(2.0))
    assert rep.passed
    assert rep.min_x_dot_n == pytest.approx(2.0)


def test_plane_not_star_shaped():
    rep = star_shaped_check(canonical_shrinker("plane"))
    assert not rep.passed
    assert rep.min_x_dot_n == pytest.approx(0.0, abs=1e-12)


def test_specimen_not_star_shaped(specimen):
    assert not star_shaped_check(specimen).passed


def test_sphere_projection():
    rep = radial_projection_check(sphere(2.0))
    # the profile runs from the negative to the positive axis
    assert rep.injective and not rep.increasing
    assert rep.interval == pytest.approx((0.0, np.pi))
    assert rep.image == "sphere"


def test_circle_polar_angle_unwrapped():
    th = polar_angle(circle(1.0))
    assert np.ptp(th) == pytest.approx(2 * np.pi, rel=1e-2)
    assert np.all(np.diff(th) < 0) or np.all(np.diff(th) > 0)


def test_plane_meets_its_cone():
    with pytest.raises(PreconditionFailed):
        radial_projection_check(canonical_shrinker("plane"), Cone((np.pi / 2,)))


def test_not_star_shaped_rejected():
    S = sphere(1.0)
    off = geometric_data(S.curve.with_nodes(S.pos + [3.0, 0.0]))
    with pytest.raises(PreconditionFailed):
        radial_projection_check(off)


@pytest.mark.parametrize("theta", [0.6, 1.0197, 2.2])
def test_cap_projection(theta):
    S = radial_cap(theta)
    rep = radial_projection_check(S, Cone((theta,)))
    assert rep.injective
    assert rep.interval[0] == 0.0
    assert rep.interval[1] == pytest.approx(theta, abs=5e-3)
    assert rep.image == "cap around the positive axis"


def test_cap_with_wrong_link():
    S = radial_cap(1.0)
    rep = radial_projection_check(S, Cone((1.2,)), link_tol=1e-2)
    assert not rep.injective
    assert rep.link_match[0] == pytest.approx(0.2, abs=5e-3)


@pytest.mark.parametrize("angles,count,kinds,connected", [
    ((np.pi / 4,), 2, ["cap", "cap"], True),
    ((np.pi / 4, np.pi / 2), 3, ["cap", "band", "cap"], False),
])
def test_separation_report(angles, count, kinds, connected):
    rep = separation_report(Cone(angles))
    assert rep.count == count
    assert rep.kinds == kinds
    assert rep.link_connected is connected
    assert rep.separates is (count == 2 and connected)


@given(st.lists(st.floats(0.01, np.pi - 0.01), min_size=1, max_size=6, unique=True))
def test_k_circles_give_k_plus_one_components(angles):
    rep = separation_report(Cone(tuple(angles)))
    assert rep.count == len(rep.link) + 1
    assert sum(b - a for a, b in rep.components) == pytest.approx(np.pi)


def _brute_crossings(P, Q):
    count = 0
    for a1, b1 in zip(P[:-1], P[1:]):
        for a2, b2 in zip(Q[:-1], Q[1:]):
            d1, d2, w = b1 - a1, b2 - a2, a2 - a1
            den = d1[0] * d2[1] - d1[1] * d2[0]
            if den == 0:
                continue
            s = (w[0] * d2[1] - w[1] * d2[0]) / den
            u = (w[0] * d1[1] - w[1] * d1[0]) / den
            count += (0 <= s < 1) and (0 <= u < 1)
    return count


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 30), m=st.integers(2, 30))
def test_mutual_crossings_brute_force(seed, n, m):
    rng = np.random.default_rng(seed)
    P = np.cumsum(rng.normal(size=(n, 2)), axis=0)
    Q = np.cumsum(rng.normal(size=(m, 2)), axis=0)
    assert mutual_crossings(P, Q) == _brute_crossings(P, Q)


def test_separation_from_concentric_spheres():
    k, d = separation_from(sphere(2.0), sphere(3.0))
    assert k == 0
    assert d == pytest.approx(1.0, abs=1e-3)


def test_report_helpers():
    rep = PipelineReport([Stage("a", True), Stage("b", False, {"x": 1}, "bad")])
    assert not rep.passed
    assert rep.failed_stage == "b"
    assert rep.stage("b").message == "bad"
    assert rep.as_dict()["stages"][1]["details"] == {"x": 1}
    with pytest.raises(KeyError):
        rep.stage("c")
    assert not PipelineReport([]).passed


@pytest.mark.parametrize("kind,stage,fragment", [
    ("sphere", "precondition", "no asymptotic cone"),
    ("cylinder", "precondition", "not conical"),
    ("plane", "spectrum", "not below -1"),
])
def test_pipeline_rejects_canonical(kind, stage, fragment):
    S = canonical_shrinker(kind, resolution=513, analytic=False)
    rep = theorem_pipeline(S, PipelineConfig())
    assert not rep.passed
    assert rep.failed_stage == stage
    assert fragment in rep.stage(stage).message
    assert rep.stages[-1].name == stage
