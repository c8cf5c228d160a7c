"""Acceptance criteria 1-9.

Every test carries ``criterion(k)``; the terminal summary prints one
PASS/FAIL line per criterion. The end-to-end separation run (criterion 7)
is driven through the command line exactly as a user would run it.
"""
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from shrinkerkit import cli, io
from shrinkerkit.entropy import monotonicity_audit
from shrinkerkit.flow import Controller, avoidance_audit, run, self_similar_trace
from shrinkerkit.geometry import geometric_data, origin, resample, shrinker_residual
from shrinkerkit.shrinkers import asymptotic_cone, canonical_shrinker, find_conical_specimen
from shrinkerkit.smc import (
    _boundary_layer, convergence_order, curvature_ratio_audit, lower_bound_audit, smc,
    smc_evolution_residual,
)
from shrinkerkit.spectrum import build_perturbation, lowest_eigenpair, weighted_poincare_test

from conftest import FLOW_R, SPECIMEN_RMAX
from shapes import circle, sphere

LAMBDA_1 = math.sqrt(2 * math.pi / math.e)
LAMBDA_2 = 4 / math.e
CANONICAL = [("plane", 2), ("sphere", 2), ("cylinder", 2), ("circle", 1), ("line", 1)]


def shrinker_cli(*argv, timeout=300):
    return subprocess.run([sys.executable, "-m", "shrinkerkit.cli", *argv],
                          capture_output=True, timeout=timeout)


# ---------------------------------------------------------------------------
# 1. entropy goldens


@pytest.fixture(scope="module")
def goldens():
    rows, ordering = cli.golden_values()
    return {tag: (v, exact, tol) for tag, v, exact, tol, _ in rows}, ordering


@pytest.mark.criterion(1)
@pytest.mark.parametrize("tag,exact,tol", [
    ("plane", 1.0, 1e-6),
    ("circle", LAMBDA_1, 1e-4),
    ("sphere", LAMBDA_2, 1e-4),
])
def test_entropy_golden(goldens, tag, exact, tol):
    value = goldens[0][tag][0]
    assert abs(value - exact) <= tol


@pytest.mark.criterion(1)
def test_entropy_ordering(goldens):
    table, ordering = goldens
    l1, l2 = table["circle"][0], table["sphere"][0]
    assert ordering
    assert 2 > l1 > 1.5 > l2 > math.sqrt(2)
    assert table["limit"][0] == pytest.approx(math.sqrt(2), abs=1e-5)


# ---------------------------------------------------------------------------
# 2. shrinker residuals


@pytest.mark.criterion(2)
@pytest.mark.parametrize("kind,n", CANONICAL)
def test_canonical_residual_analytic(kind, n):
    S = canonical_shrinker(kind, n, analytic=True)
    assert shrinker_residual(S)[1] <= 1e-10


@pytest.mark.criterion(2)
@pytest.mark.parametrize("kind,n", CANONICAL)
def test_canonical_residual_sampled(kind, n):
    S = canonical_shrinker(kind, n, resolution=513, analytic=False)
    assert shrinker_residual(S)[1] <= 10 * S.h**2


@pytest.mark.criterion(2)
def test_specimen_residual(specimen_shot, specimen):
    assert specimen_shot.residual <= 1e-6
    assert shrinker_residual(specimen)[1] <= 1e-6
    # non-flat: the profile is not a straight line through the origin
    assert np.max(specimen.A) > 0.1


@pytest.mark.criterion(2)
def test_specimen_cone_stable(specimen_shot, specimen):
    fit = asymptotic_cone(specimen)
    assert fit.conical
    half = find_conical_specimen(r_max=SPECIMEN_RMAX / 2)
    coarse = asymptotic_cone(half.surface)
    drift = np.max(np.abs(np.subtract(fit.cone.angles, coarse.cone.angles)))
    assert drift <= 1e-3


# ---------------------------------------------------------------------------
# 3. spectrum


@pytest.mark.criterion(3)
def test_sphere_spectrum():
    sp = lowest_eigenpair(canonical_shrinker("sphere", resolution=513, analytic=False))
    assert abs(sp.mu + 1) <= 1e-3
    assert np.max(np.abs(sp.f - math.sqrt(math.e / (16 * math.pi)))) <= 1e-4


@pytest.mark.criterion(3)
def test_cylinder_spectrum():
    sp = lowest_eigenpair(canonical_shrinker("cylinder", resolution=513, analytic=False))
    assert abs(sp.mu + 1) <= 1e-3


@pytest.mark.criterion(3)
def test_specimen_below_minus_one(specimen_spectrum):
    margin = -1 - specimen_spectrum.mu
    assert margin > 0.5


@pytest.mark.criterion(3)
def test_mu_by_radius_monotone(specimen_spectrum):
    mus = [m for _, m in specimen_spectrum.mu_by_R]
    assert len(mus) >= 3
    assert sum(b > a for a, b in zip(mus, mus[1:])) == 0


@pytest.mark.criterion(3)
def test_decay_exponent_in_bracket(specimen_spectrum):
    sp = specimen_spectrum
    fit = sp.decay_fit
    assert sp.beta == pytest.approx(0.5 * min(1.0, -sp.mu - 1))
    assert fit.applicable
    lo, hi = fit.bracket
    assert lo <= fit.slope <= hi


# ---------------------------------------------------------------------------
# 4. weighted Poincare inequality


@pytest.mark.criterion(4)
@pytest.mark.parametrize("kind", ["plane", "cylinder", "specimen"])
def test_poincare_trials(kind, request):
    if kind == "specimen":
        S = request.getfixturevalue("specimen")
    else:
        S = canonical_shrinker(kind, resolution=1025, analytic=False)
    rep = weighted_poincare_test(S, trials=1000, seed=0)
    assert rep.ratios.size == 1000
    assert int(np.sum(rep.ratios > 1 + 1e-3)) == 0
    assert rep.worst <= 1 + 1e-3


# ---------------------------------------------------------------------------
# 5. shrinker mean curvature


@pytest.mark.criterion(5)
@pytest.mark.parametrize("kind,n", CANONICAL + [("specimen", 2)])
def test_smc_vanishes_self_similar(kind, n, request):
    if kind == "specimen":
        S = request.getfixturevalue("specimen")
    else:
        S = canonical_shrinker(kind, n, resolution=513, analytic=False)
    ss = self_similar_trace(S, [-1.0, -0.5, -0.1])
    for t, T in zip(ss.times, ss.surfaces):
        vals = smc(T, origin(n), t).values[_boundary_layer(T, 5)]
        assert np.max(np.abs(vals)) <= 10 * T.h**2


@pytest.fixture(scope="module")
def refinement_residuals(specimen_spectrum, eps0):
    sp = specimen_spectrum
    Sigma, f = sp.truncated(20.0)
    p = build_perturbation(Sigma, f, -0.5 * eps0, mu=sp.mu, C0=sp.C0)
    worst = []
    for h, spacing in ((0.04, 0.02), (0.02, 0.01)):
        G = geometric_data(resample(p.surface.curve, spacing=h))
        save = tuple(np.round(np.arange(-1 + spacing, -0.8 + 1e-9, spacing), 12))
        tr = run(G, -0.8, Controller(save_times=save))
        worst.append(smc_evolution_residual(tr, origin(2)).worst)
    return worst


@pytest.mark.criterion(5)
def test_evolution_residual_order(refinement_residuals):
    coarse, fine = refinement_residuals
    assert fine < coarse
    assert convergence_order(coarse, fine) >= 0.9


def _constants(perturbed_flows, specimen_spectrum):
    sp = specimen_spectrum
    return -sp.mu * perturbed_flows["eps"] / sp.C0, -sp.mu


@pytest.mark.criterion(5)
@pytest.mark.parametrize("sign", [1, -1], ids=["plus", "minus"])
def test_lower_bound_audit(perturbed_flows, specimen_spectrum, sign):
    c, alpha = _constants(perturbed_flows, specimen_spectrum)
    rep = lower_bound_audit(perturbed_flows[sign], origin(2), c, alpha)
    assert len(rep.violations) == 0
    assert rep.passed


@pytest.mark.criterion(5)
@pytest.mark.parametrize("sign", [1, -1], ids=["plus", "minus"])
def test_ratio_audit(perturbed_flows, specimen_spectrum, sign):
    c, alpha = _constants(perturbed_flows, specimen_spectrum)
    rep = curvature_ratio_audit(perturbed_flows[sign], origin(2), c, alpha, R=FLOW_R)
    assert len(rep.breaches) == 0
    assert rep.passed


# ---------------------------------------------------------------------------
# 6. flow accuracy


def radius_law(r0, n, t):
    return math.sqrt(r0 * r0 - 2 * n * t - 2 * n)


@pytest.fixture(scope="module")
def round_flows():
    save = tuple(np.round(np.arange(-0.95, -0.24, 0.05), 12))
    return {
        ("circle", 2.0): run(circle(2.0), -0.25, Controller(save_times=save)),
        ("sphere", 2.0): run(sphere(2.0), -0.25, Controller(save_times=save)),
        ("sphere", 3.0): run(sphere(3.0, 301), -0.25, Controller(save_times=save)),
    }


@pytest.mark.criterion(6)
@pytest.mark.parametrize("kind,r0", [("circle", 2.0), ("sphere", 2.0), ("sphere", 3.0)])
def test_radius_law(round_flows, kind, r0):
    tr = round_flows[(kind, r0)]
    n = 1 if kind == "circle" else 2
    assert tr.times[-1] == -0.25
    r = tr.final.radius
    exact = radius_law(r0, n, -0.25)
    assert np.max(np.abs(r - exact)) / exact <= 1e-3


@pytest.mark.criterion(6)
def test_concentric_spheres_avoid(round_flows):
    rep = avoidance_audit(round_flows[("sphere", 2.0)], round_flows[("sphere", 3.0)], tol=1e-4)
    assert rep.ok
    assert np.all(np.diff(rep.distance) >= -1e-4)


# ---------------------------------------------------------------------------
# 7. end-to-end separation run


@pytest.fixture(scope="session")
def specimen_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("specimen") / "specimen.csv"
    res = shrinker_cli("solve", "--kind", "conical", "--rmax", str(SPECIMEN_RMAX),
                       "--out", str(path))
    assert res.returncode == 0, res.stderr.decode()
    return path


def _theorem1(specimen_file, report):
    return shrinker_cli("theorem1", "--specimen", str(specimen_file), "--report", str(report),
                        "--run-all", "--workers", "2", timeout=600)


@pytest.fixture(scope="session")
def theorem1_run(specimen_file, tmp_path_factory):
    report = tmp_path_factory.mktemp("theorem1") / "report.json"
    res = _theorem1(specimen_file, report)
    assert report.exists(), res.stderr.decode()
    data = report.read_bytes()
    return res.returncode, data, json.loads(data)


def _stage(report, name):
    for st in report["stages"]:
        if st["name"] == name:
            return st
    pytest.fail(f"stage {name!r} was not reached")


@pytest.mark.criterion(7)
def test_theorem1_exit_code(theorem1_run):
    code, _, report = theorem1_run
    failed = [(st["name"], st["message"]) for st in report["stages"] if not st["passed"]]
    assert code == 0, failed


@pytest.mark.criterion(7)
def test_theorem1_hypotheses(theorem1_run):
    st = _stage(theorem1_run[2], "precondition")
    assert st["details"]["entropy"] <= LAMBDA_1
    assert st["passed"], st["message"]


@pytest.mark.criterion(7)
def test_theorem1_a_entropy_drops(theorem1_run):
    st = _stage(theorem1_run[2], "entropy")
    d = st["details"]
    assert all(v < 0 for v in d["diffs"])
    assert d["strict"]
    assert d["rel_error"] <= 0.3
    assert st["passed"], st["message"]


@pytest.mark.criterion(7)
@pytest.mark.parametrize("sign", ["+", "-"])
def test_theorem1_b_no_singularity(theorem1_run, sign):
    d = _stage(theorem1_run[2], f"flow{sign}")["details"]
    assert d["status"] == "reached", f"singular near T = {d['T_est']}"
    assert d["final_time"] == 0.0


@pytest.mark.criterion(7)
@pytest.mark.parametrize("sign", ["+", "-"])
def test_theorem1_c_smc_positive(theorem1_run, sign):
    report = theorem1_run[2]
    d = _stage(report, f"flow{sign}")["details"]
    bound = _stage(report, "perturbation")["details"]["floor_bound"]
    assert d["smc_violations"] == 0
    assert d["smc_min"] > 0
    assert d["smc_floor"] >= bound


@pytest.mark.criterion(7)
@pytest.mark.parametrize("sign", ["+", "-"])
def test_theorem1_d_disjoint(theorem1_run, sign):
    d = _stage(theorem1_run[2], f"flow{sign}")["details"]
    assert sum(d["crossings"]) == 0
    assert "cone_distance" in d, "the flow did not reach t = 0"
    assert d["cone_distance"] > d["cone_margin"]


@pytest.mark.criterion(7)
@pytest.mark.parametrize("sign", ["+", "-"])
def test_theorem1_e_star_shaped(theorem1_run, sign):
    d = _stage(theorem1_run[2], "topology")["details"]
    assert f"star{sign}" in d, "no time-zero slice"
    assert d[f"star{sign}"]["passed"]
    assert d[f"projection{sign}"]["injective"]


@pytest.mark.criterion(7)
def test_theorem1_f_two_components(theorem1_run):
    st = _stage(theorem1_run[2], "topology")
    d = st["details"]
    assert d["link"]["separates"]
    assert d["link"]["count"] == 2
    assert d.get("images_match_components") is True
    assert st["passed"], st["message"]


# ---------------------------------------------------------------------------
# 8. monotonicity


@pytest.mark.criterion(8)
@pytest.mark.parametrize("sign", [1, -1], ids=["plus", "minus"])
def test_monotone_on_perturbed_flows(perturbed_flows, sign):
    rep = monotonicity_audit(perturbed_flows[sign], t0=0.0)
    assert rep.max_increase <= 5e-4


@pytest.mark.criterion(8)
@pytest.mark.parametrize("key", [("circle", 2.0), ("sphere", 2.0), ("sphere", 3.0)],
                         ids=["circle2", "sphere2", "sphere3"])
def test_monotone_on_round_flows(round_flows, key):
    rep = monotonicity_audit(round_flows[key], t0=0.0)
    assert rep.max_increase <= 5e-4


@pytest.mark.criterion(8)
@pytest.mark.parametrize("kind,n", CANONICAL[:4] + [("specimen", 2)])
def test_constant_on_self_similar_flows(kind, n, request):
    if kind == "specimen":
        S = request.getfixturevalue("specimen")
    else:
        S = canonical_shrinker(kind, n, resolution=513, analytic=False)
    ss = self_similar_trace(S, list(np.linspace(-1.0, -0.1, 10)))
    assert monotonicity_audit(ss, t0=0.0).drift <= 1e-4


# ---------------------------------------------------------------------------
# 9. determinism


@pytest.mark.criterion(9)
def test_theorem1_report_reproducible(theorem1_run, specimen_file, tmp_path):
    report = tmp_path / "again.json"
    _theorem1(specimen_file, report)
    assert report.read_bytes() == theorem1_run[1]


@pytest.mark.criterion(9)
@pytest.mark.parametrize("argv", [
    ["goldens", "--no-write", "--golden-dir", "{tmp}/g"],
    ["spectrum", "--surface", "{specimen}"],
    ["entropy", "--surface", "{specimen}"],
    ["solve", "--kind", "conical", "--rmax", "20"],
], ids=["goldens", "spectrum", "entropy", "solve"])
def test_verdicts_reproducible(argv, specimen_file, tmp_path):
    argv = [a.format(tmp=tmp_path, specimen=specimen_file) for a in argv]
    first, second = shrinker_cli(*argv), shrinker_cli(*argv)
    assert first.returncode == second.returncode
    assert first.stdout and first.stdout == second.stdout


@pytest.mark.criterion(9)
def test_perturbed_flow_verdict_reproducible(specimen_spectrum, eps0):
    sp = specimen_spectrum
    Sigma, f = sp.truncated(20.0)
    p = build_perturbation(Sigma, f, 0.5 * eps0, mu=sp.mu, C0=sp.C0)
    G = geometric_data(resample(p.surface.curve, spacing=0.04))

    def verdict():
        tr = run(G, -0.9, Controller(save_times=(-0.95, -0.9)))
        mono = monotonicity_audit(tr, t0=0.0)
        return io.dumps({"pos": tr.final.pos, "theta": mono.values, "steps": tr.steps})

    assert verdict() == verdict()


@pytest.mark.criterion(9)
def test_spectrum_independent_of_seed(specimen):
    a = lowest_eigenpair(specimen, seed=0)
    b = lowest_eigenpair(specimen, seed=3)
    assert io.dumps({"mu": a.mu, "f": a.f}) == io.dumps({"mu": b.mu, "f": b.f})
