"""Command-line drivers.

Every subcommand writes a JSON verdict (to stdout or ``--json``/``--report``)
and exits 0 when its asserted checks pass, 1 when a check fails and 2 on
usage errors or unreadable input.
"""
import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import entropy as ent
from . import flow
from . import io
from . import shrinkers
from . import smc as smc_mod
from . import spectrum
from . import topo
from .geometry import SpaceTimePoint, geometric_data, resample, shrinker_residual

GOLDEN_ENV = "SHRINKERKIT_GOLDEN_DIR"


class UsageError(ValueError):
    pass


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _emit(verdict, path=None):
    text = io.dumps(verdict)
    if path:
        Path(path).write_text(text, encoding="ascii")
    else:
        sys.stdout.write(text)


def _surface(path):
    return geometric_data(io.read_surface(path))


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args):
    if args.kind in ("plane", "sphere", "cylinder", "line", "circle"):
        n = 1 if args.kind in ("line", "circle") else args.n
        curve = shrinkers.canonical_curve(args.kind, n, args.resolution, args.rmax)
        S = geometric_data(curve)
        verdict = {"kind": args.kind, "n": n}
    else:
        if args.kind == "conical":
            shot = shrinkers.find_conical_specimen(args.bracket, r_max=args.rmax, tol=args.tol)
        else:
            shot = shrinkers.shoot_rotsym_shrinker(args.param, r_max=args.rmax, tol=args.tol)
        curve = shot.profile
        S = shot.surface
        verdict = {"kind": args.kind, "n": 2, "param": shot.param, "family": shot.family}
    res = shrinker_residual(S)[1]
    tol = args.tol if args.kind in ("shoot", "conical") else 10 * S.h**2
    verdict.update(residual=res, tol=tol, nodes=S.size, h=S.h, passed=res <= tol)
    if not S.compact:
        try:
            fit = shrinkers.asymptotic_cone(S)
            verdict["cone"] = {"link": list(fit.cone.angles), "error": fit.error,
                               "conical": fit.conical}
        except shrinkers.NoCone:
            verdict["cone"] = None
    if args.out:
        io.write_surface(args.out, curve)
        io.write_json(Path(args.out).with_suffix(".json"), verdict)
    _emit(verdict, args.json)
    return 0 if verdict["passed"] else 1


def cmd_entropy(args):
    S = _surface(args.surface)
    e = ent.entropy(S, budget=args.budget, seed=args.seed)
    verdict = {"entropy": e.value, "center": e.center, "t0": e.t0, "status": e.status,
               "F_origin": ent.f_functional(S, tail_tol=None)}
    _emit(verdict, args.json)
    return 0 if e.status == "converged" else 1


def cmd_gscan(args):
    S = _surface(args.surface)
    logs = np.linspace(args.log_t[0], args.log_t[1], args.points)
    offs = np.linspace(args.offset[0], args.offset[1], args.points)
    rows = {"log_t0": [], "offset": [], "F": []}
    for lt in logs:
        for x in offs:
            c = [x] + [0.0] * S.n
            rows["log_t0"].append(lt)
            rows["offset"].append(x)
            rows["F"].append(ent.f_functional(S, c, float(np.exp(lt)), tail_tol=None))
    io.write_series(args.out, rows)
    k = int(np.argmax(rows["F"]))
    _emit({"max_F": rows["F"][k], "at": [rows["log_t0"][k], rows["offset"][k]],
           "out": args.out}, args.json)
    return 0


def cmd_spectrum(args):
    S = _surface(args.surface)
    r = spectrum.lowest_eigenpair(S, R_schedule=args.R, seed=args.seed)
    verdict = {
        "mu": r.mu, "mu_by_R": r.mu_by_R, "monotone": r.monotone, "beta": r.beta,
        "C0": r.C0, "C1": r.C1, "rayleigh_gap": r.rayleigh_gap,
        "uniqueness_gap": r.uniqueness_gap, "angular_gap": r.angular_gap,
        "decay_fit": None if r.decay_fit is None else {
            "slope": r.decay_fit.slope, "band": r.decay_fit.band,
            "bracket": r.decay_fit.bracket, "applicable": r.decay_fit.applicable,
            "within": r.decay_fit.within},
    }
    passed = r.monotone and (r.decay_fit is None or not r.decay_fit.applicable
                             or r.decay_fit.within)
    verdict["passed"] = passed
    if args.out:
        io.write_series(args.out, {"x": r.surface.pos[:, 0], "r": r.surface.pos[:, 1], "f": r.f})
    _emit(verdict, args.json)
    return 0 if passed else 1


def cmd_perturb(args):
    S = _surface(args.surface)
    sp = spectrum.lowest_eigenpair(S, seed=args.seed)
    Sigma, f = sp.truncated(args.R)
    p = spectrum.build_perturbation(Sigma, f, args.eps, mu=sp.mu, C0=sp.C0)
    c = p.checks
    verdict = {"eps": p.epsilon, "mu": sp.mu, "C0": sp.C0, "smc_floor": p.smc_floor,
               "floor_bound": p.floor_bound, "K": p.K,
               "checks": {"graph": c.graph, "tube": c.tube, "local_graph": c.local_graph,
                          "smc_floor": c.smc_floor}, "passed": c.all}
    if args.out:
        io.write_surface(args.out, p.surface)
    _emit(verdict, args.json)
    return 0 if c.all else 1


def cmd_flow(args):
    S = _surface(args.input)
    if args.h:
        S = geometric_data(resample(S.curve, spacing=args.h))
    save = args.save if args.save else None
    ctrl = flow.Controller(dt=args.dt, save_times=save)
    tr = flow.run(S, args.horizon, ctrl, t_start=args.t_start)
    if args.trace_out:
        io.write_trace(args.trace_out, tr)
    verdict = {"status": tr.status, "T_est": tr.T_est, "x0_est": tr.x0_est,
               "times": tr.times, "steps": tr.steps, "final_nodes": tr.final.size}
    _emit(verdict, args.json)
    return 0 if tr.status == flow.REACHED else 1


def _reference(args, n):
    x = args.x0 if args.x0 else (0.0,) * (n + 1)
    return SpaceTimePoint(x, args.t0)


def cmd_diagnose(args):
    tr = io.read_trace(args.trace)
    n = tr.surfaces[0].n
    X0 = _reference(args, n)
    verdict = {"audit": args.audit, "X0": list(X0.x), "t0": X0.t}
    series = None
    if args.audit == "smc":
        mins, maxs = [], []
        for t, S in zip(tr.times, tr.surfaces):
            v = smc_mod.smc(S, X0, t).values
            mins.append(float(v.min()))
            maxs.append(float(v.max()))
        series = {"t": tr.times, "min_smc": mins, "max_smc": maxs}
        verdict.update(min=min(mins), max=max(maxs))
        passed = True
    elif args.audit == "evolution":
        ev = smc_mod.smc_evolution_residual(tr, X0)
        series = {"t": ev.times, "residual": ev.max_norm}
        verdict.update(worst=ev.worst)
        passed = ev.worst <= args.tol
    elif args.audit == "lowerbound":
        lb = smc_mod.lower_bound_audit(tr, X0, args.c, args.alpha)
        series = {"t": lb.times, "margin": lb.margin}
        verdict.update(worst=lb.worst, violations=len(lb.violations))
        passed = lb.passed
    elif args.audit == "ratio":
        rr = smc_mod.curvature_ratio_audit(tr, X0, args.c, args.alpha, args.R, args.M)
        series = {"t": rr.times, "ratio": rr.ratio}
        verdict.update(worst=rr.worst, M=rr.M, breaches=len(rr.breaches))
        passed = rr.passed
    else:
        U, A, B = smc_mod.smc_barrier_coefficients(tr, X0, args.alpha)
        mp = smc_mod.max_principle_audit(tr, U, A, B, args.R, args.c)
        series = {"t": mp.times, "floor": mp.floor, "integral": mp.integrals}
        verdict.update(M0=mp.M0, M1=mp.M1, pde_residual=mp.pde_residual,
                       hypotheses_ok=mp.hypotheses_ok, conclusion_ok=mp.conclusion_ok)
        passed = mp.passed
    verdict["passed"] = bool(passed)
    if args.csv:
        io.write_series(args.csv, series)
    _emit(verdict, args.json)
    return 0 if passed else 1


def cmd_theorem1(args):
    curve = io.read_surface(args.specimen)
    cfg = topo.PipelineConfig(h=args.h, save_dt=args.save_dt, R=args.R, flow_R=args.flow_R,
                              seed=args.seed, workers=args.workers, run_all=args.run_all, eps=args.eps)
    rep = topo.theorem_pipeline(curve, cfg)
    _emit(rep.as_dict(), args.report)
    if args.artifacts:
        d = Path(args.artifacts)
        d.mkdir(parents=True, exist_ok=True)
        for st in rep.stages:
            cols = {k: v for k, v in st.details.items()
                    if isinstance(v, list) and v and all(isinstance(x, (int, float)) for x in v)}
            lengths = {len(v) for v in cols.values()}
            if cols and len(lengths) == 1:
                io.write_series(d / f"{st.name}.csv", cols)
    return 0 if rep.passed else 1


def golden_values(seed=0):
    """Entropies of the plane and round shrinkers with the large-n limit sqrt(2)."""
    plane = shrinkers.canonical_shrinker("plane", 2, 2001, analytic=True, extent=12.0)
    circle = shrinkers.canonical_shrinker("circle", 1, 1024, analytic=True)
    sphere = shrinkers.canonical_shrinker("sphere", 2, 2001, analytic=True)

    def closed_form(n):
        # (4 pi)^(-n/2) |S^n| (2n)^(n/2) e^(-n/2)
        return math.exp(math.log(2) + (n + 1) / 2 * math.log(math.pi) - math.lgamma((n + 1) / 2)
                        - n / 2 * math.log(4 * math.pi) + n / 2 * math.log(2 * n) - n / 2)

    rows = [
        ("plane", ent.f_functional(plane, tail_tol=None), 1.0, 1e-6, "entropy of the plane"),
        ("circle", ent.f_functional(circle), math.sqrt(2 * math.pi / math.e), 1e-4,
         "entropy of the round circle"),
        ("sphere", ent.f_functional(sphere), 4 / math.e, 1e-4, "entropy of the round 2-sphere"),
        ("limit", closed_form(10**6), math.sqrt(2), 1e-5, "round n-sphere entropy as n grows"),
    ]
    l1, l2 = rows[1][1], rows[2][1]
    ordering = bool(2 > l1 > 1.5 > l2 > math.sqrt(2))
    return rows, ordering


def cmd_goldens(args):
    rows, ordering = golden_values(args.seed)
    table = [{"tag": tag, "value": v, "exact": x, "tol": tol, "note": note,
              "passed": abs(v - x) <= tol} for tag, v, x, tol, note in rows]
    verdict = {"goldens": table, "ordering": ordering,
               "passed": ordering and all(r["passed"] for r in table)}
    d = Path(args.golden_dir or os.environ.get(GOLDEN_ENV) or "goldens")
    path = d / "goldens.json"
    if path.exists():
        stored = io.read_json(path)
        drift = {r["tag"]: abs(r["value"] - s["value"])
                 for r, s in zip(table, stored.get("goldens", []))}
        verdict["regression"] = drift
        if any(v > r["tol"] for v, r in zip(drift.values(), table)):
            verdict["passed"] = False
    elif not args.no_write:
        d.mkdir(parents=True, exist_ok=True)
        io.write_json(path, verdict)
    _emit(verdict, args.json)
    return 0 if verdict["passed"] else 1


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="shrinker", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(q):
        q.add_argument("--json", help="write the verdict here instead of stdout")
        return q

    q = common(sub.add_parser("solve", help="canonical or shot shrinker"))
    q.add_argument("--kind", required=True,
                   choices=["plane", "sphere", "cylinder", "line", "circle", "shoot", "conical"])
    q.add_argument("--n", type=int, default=2, choices=[1, 2])
    q.add_argument("--param", type=float, default=0.0)
    q.add_argument("--bracket", type=_floats, default=shrinkers.SPECIMEN_BRACKET)
    q.add_argument("--rmax", type=float, default=20.0)
    q.add_argument("--tol", type=float, default=1e-6)
    q.add_argument("--resolution", type=int, default=257)
    q.add_argument("--out")
    q.set_defaults(func=cmd_solve)

    q = common(sub.add_parser("entropy", help="entropy of a surface file"))
    q.add_argument("--surface", required=True)
    q.add_argument("--budget", type=int, default=4000)
    q.set_defaults(func=cmd_entropy)

    q = common(sub.add_parser("gscan", help="grid of F over scale and axis offset"))
    q.add_argument("--surface", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--log-t", type=_floats, default=(-2.0, 2.0))
    q.add_argument("--offset", type=_floats, default=(-2.0, 2.0))
    q.add_argument("--points", type=int, default=21)
    q.set_defaults(func=cmd_gscan)

    q = common(sub.add_parser("spectrum", help="lowest eigenpair of the stability operator"))
    q.add_argument("--surface", required=True)
    q.add_argument("--R", type=_floats, default=spectrum.R_SCHEDULE)
    q.add_argument("--out", help="CSV of the eigenfunction")
    q.set_defaults(func=cmd_spectrum)

    q = common(sub.add_parser("perturb", help="normal graph along the eigenfunction"))
    q.add_argument("--surface", required=True)
    q.add_argument("--eps", type=float, required=True)
    q.add_argument("--R", type=float, default=20.0)
    q.add_argument("--out")
    q.set_defaults(func=cmd_perturb)

    q = sub.add_parser("flow", help="mean curvature flow")
    fs = q.add_subparsers(dest="action", required=True)
    r = common(fs.add_parser("run"))
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--horizon", type=float, required=True)
    r.add_argument("--dt", type=float)
    r.add_argument("--h", type=float, help="resample to this arclength spacing first")
    r.add_argument("--t-start", type=float, default=-1.0)
    r.add_argument("--save", type=_floats, help="comma-separated save times")
    r.add_argument("--trace-out")
    r.set_defaults(func=cmd_flow)

    q = common(sub.add_parser("diagnose", help="shrinker mean curvature audits on a trace"))
    q.add_argument("audit", choices=["smc", "evolution", "lowerbound", "ratio", "maxprinciple"])
    q.add_argument("--trace", required=True)
    q.add_argument("--x0", type=_floats)
    q.add_argument("--t0", type=float, default=0.0)
    q.add_argument("--c", type=float, default=0.0)
    q.add_argument("--alpha", type=float, default=0.0)
    q.add_argument("--R", type=float, default=0.0)
    q.add_argument("--M", type=float)
    q.add_argument("--tol", type=float, default=1e-2)
    q.add_argument("--csv", help="per-time CSV")
    q.set_defaults(func=cmd_diagnose)

    q = sub.add_parser("theorem1", help="end-to-end separation pipeline")
    q.add_argument("--specimen", required=True)
    q.add_argument("--report")
    q.add_argument("--artifacts", help="directory for per-stage CSV files")
    q.add_argument("--h", type=float, default=0.02)
    q.add_argument("--save-dt", type=float, default=0.1)
    q.add_argument("--R", type=float, default=20.0)
    q.add_argument("--flow-R", type=float, default=30.0,
                   help="truncation radius of the flowed surfaces")
    q.add_argument("--eps", type=float)
    q.add_argument("--workers", type=int, default=1)
    q.add_argument("--run-all", action="store_true")
    q.set_defaults(func=cmd_theorem1)

    q = common(sub.add_parser("goldens", help="regression table of entropy values"))
    q.add_argument("--golden-dir")
    q.add_argument("--no-write", action="store_true")
    q.set_defaults(func=cmd_goldens)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (io.MalformedFile, UsageError, FileNotFoundError) as e:
        print(f"shrinker: error: {e}", file=sys.stderr)
        return 2
    except (smc_mod.HypothesisFailed, smc_mod.CorrespondenceLost, spectrum.NotAShrinker,
            spectrum.SolverFailure, spectrum.InvalidPerturbation, shrinkers.ShootFailed,
            flow.StepRejected) as e:
        print(f"shrinker: check failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
