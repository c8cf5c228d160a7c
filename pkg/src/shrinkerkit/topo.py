"""Star-shapedness, radial projection and link separation, plus the end-to-end pipeline.

The pipeline perturbs an asymptotically conical shrinker along its lowest
eigenfunction, flows both perturbations from ``t = -1`` to ``t = 0`` and
checks that the two time-zero slices are star-shaped graphs over the two
components of the sphere minus the link of the cone.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import entropy as ent
from . import flow
from . import smc as smc_mod
from . import spectrum
from .geometry import (
    SurfaceSampleSet, distance_to_cone, geometric_data, origin, resample, shrinker_residual,
)
from .shrinkers import NoCone, asymptotic_cone

LAMBDA_1 = float(np.sqrt(2 * np.pi / np.e))


class PreconditionFailed(ValueError):
    """An input does not satisfy the hypotheses of a check."""


# ---------------------------------------------------------------------------
# star-shapedness and radial projection


@dataclass
class StarShapedReport:
    passed: bool
    min_x_dot_n: float
    node: int


def star_shaped_check(S, mask=None):
    """``min x . n`` over the nodes; star-shaped iff strictly positive."""
    xn = S.x_dot_n
    idx = np.arange(S.size) if mask is None else np.flatnonzero(mask)
    k = idx[int(np.argmin(xn[idx]))]
    return StarShapedReport(bool(xn[k] > 0), float(xn[k]), int(k))


def polar_angle(S):
    """Angle of each node from the positive x-axis (unwrapped along closed curves)."""
    th = np.arctan2(S.pos[:, 1], S.pos[:, 0])
    if S.n == 1:
        th = np.unwrap(th)
    return th


@dataclass
class ProjectionReport:
    """Radial projection ``x -> x/|x|`` of a rotationally symmetric profile.

    ``interval`` is the image of the polar angle; ``link_match`` gives, per
    open end of the interval, the distance to the nearest link angle.
    ``arc`` is the offending node range when monotonicity fails.
    """

    injective: bool
    interval: tuple
    increasing: bool
    link_match: tuple = ()
    arc: tuple = None

    @property
    def image(self):
        lo, hi = self.interval
        if self.link_match and lo <= 1e-12:
            return "cap around the positive axis"
        if self.link_match and hi >= np.pi - 1e-12:
            return "cap around the negative axis"
        return "band" if self.link_match else "sphere"


def radial_projection_check(S, cone=None, mask=None, link_tol=1e-2, min_distance=None):
    """Injectivity of the radial projection in the symmetric reduction.

    For a surface of revolution the projection is injective iff the polar
    angle is strictly monotone along the profile. With a cone, the image
    interval's open endpoints must be link angles (within ``link_tol``).

    Raises
    ------
    PreconditionFailed
        If the surface is not star-shaped, or meets the cone (``min_distance``
        defaults to 0; nodes in ``mask`` only).
    """
    keep = np.ones(S.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    star = star_shaped_check(S, keep)
    if cone is not None:
        d = float(np.min(distance_to_cone(S.pos[keep], cone)))
        if d <= (min_distance or 0.0):
            raise PreconditionFailed(f"surface meets its cone (distance {d:.3g})")
    if not star.passed:
        raise PreconditionFailed(f"not star-shaped: min x.n = {star.min_x_dot_n:.3g}")
    th = polar_angle(S)[keep]
    idx = np.flatnonzero(keep)
    d = np.diff(th)
    increasing = bool(np.sum(d) > 0)
    bad = np.flatnonzero(d <= 0) if increasing else np.flatnonzero(d >= 0)
    lo, hi = float(np.min(th)), float(np.max(th))
    if S.n == 2 and S.curve is not None:
        # on-axis ends close the image up to the poles
        a, b = S.curve.axis_ends
        ends = [th[0], th[-1]]
        if a:
            ends[0] = 0.0 if th[0] < np.pi / 2 else np.pi
        if b:
            ends[1] = 0.0 if th[-1] < np.pi / 2 else np.pi
        lo, hi = float(min(ends)), float(max(ends))
    arc = (int(idx[bad[0]]), int(idx[bad[-1] + 1])) if bad.size else None
    match = ()
    if cone is not None:
        link = np.asarray(cone.angles)
        match = tuple(float(np.min(np.abs(link - e))) for e in (lo, hi)
                      if 1e-12 < e < np.pi - 1e-12)
    inj = bad.size == 0 and all(m <= link_tol for m in match)
    return ProjectionReport(bool(inj), (lo, hi), increasing, match, arc)


# ---------------------------------------------------------------------------
# link separation


@dataclass
class LinkReport:
    """Components of the sphere minus the link of a rotationally symmetric cone.

    ``components`` are polar-angle intervals; each is a cap (touching a pole)
    or a band.
    """

    link: tuple
    components: list
    kinds: list
    link_connected: bool

    @property
    def count(self):
        return len(self.components)

    @property
    def separates(self):
        """Exactly two components and a connected link."""
        return self.count == 2 and self.link_connected

    def as_dict(self):
        return {"link": list(self.link), "components": [list(c) for c in self.components],
                "kinds": self.kinds, "count": self.count, "link_connected": self.link_connected,
                "separates": self.separates}


def separation_report(cone):
    """Count the components of ``S^2`` minus ``k`` link circles (``k + 1`` intervals)."""
    edges = [0.0, *cone.angles, float(np.pi)]
    comps = [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]
    kinds = ["cap" if (a == 0.0 or b == np.pi) else "band" for a, b in comps]
    # each link angle is one circle; a union of k circles is connected iff k = 1
    return LinkReport(tuple(cone.angles), comps, kinds, len(cone.angles) == 1)


# ---------------------------------------------------------------------------
# crossings between two profiles


def mutual_crossings(P, Q):
    """Number of crossings between the segments of open polylines ``P`` and ``Q``."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    a1, b1 = P[:-1], P[1:]
    a2, b2 = Q[:-1], Q[1:]
    r = 0.5 * max(np.max(np.hypot(*(b1 - a1).T)), np.max(np.hypot(*(b2 - a2).T)))
    t1 = cKDTree(0.5 * (a1 + b1))
    t2 = cKDTree(0.5 * (a2 + b2))
    pairs = t1.sparse_distance_matrix(t2, 2 * r + 1e-12, output_type="ndarray")
    if pairs.size == 0:
        return 0
    i, j = pairs["i"], pairs["j"]
    d1 = b1[i] - a1[i]
    d2 = b2[j] - a2[j]
    den = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    w = a2[j] - a1[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (w[:, 0] * d2[:, 1] - w[:, 1] * d2[:, 0]) / den
        u = (w[:, 0] * d1[:, 1] - w[:, 1] * d1[:, 0]) / den
    hit = (den != 0) & (s >= 0) & (s < 1) & (u >= 0) & (u < 1)
    return int(np.sum(hit))


def _far_mask(S, far=smc_mod.FAR_FIELD):
    return smc_mod._boundary_layer(S, 0, far=far)


def _runs(mask):
    """Contiguous index runs of a boolean mask."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(idx) > 1) + 1
    return np.split(idx, cuts)


def separation_from(S, T, far=smc_mod.FAR_FIELD):
    """Crossings and min distance of ``S`` (judged part only) to the full profile ``T``."""
    crossings, dist = 0, np.inf
    Q = np.vstack((T.pos, T.pos[:1])) if T.closed else T.pos
    for run in _runs(_far_mask(S, far)):
        if run.size < 2:
            continue
        P = S.pos[run]
        crossings += mutual_crossings(P, Q)
        dist = min(dist, float(np.min(cKDTree(Q).query(P)[0])))
    return crossings, dist


# ---------------------------------------------------------------------------
# end-to-end pipeline


@dataclass
class Stage:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    message: str = ""

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "message": self.message,
                "details": self.details}


@dataclass
class PipelineReport:
    stages: list

    @property
    def passed(self):
        return bool(self.stages) and all(s.passed for s in self.stages)

    @property
    def failed_stage(self):
        for s in self.stages:
            if not s.passed:
                return s.name
        return None

    def stage(self, name):
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def as_dict(self):
        return {"passed": self.passed, "failed_stage": self.failed_stage,
                "stages": [s.as_dict() for s in self.stages]}


@dataclass
class PipelineConfig:
    """Knobs of :func:`theorem_pipeline`.

    ``R`` is the radius the specimen is truncated to when choosing and
    checking the perturbation size. The flows start from the same
    perturbation on the wider truncation ``flow_R``, so the clamped far
    boundary does not reach the audited region during the run. ``h`` is the flow spacing and ``save_dt`` the spacing of saved slices.
    """

    residual_tol: float = 1e-5
    R: float = 20.0
    flow_R: float = 30.0
    h: float = 0.02
    save_dt: float = 0.1
    eps: float = None
    entropy_points: int = 4
    entropy_budget: int = 4000
    seed: int = 0
    workers: int = 1
    run_all: bool = False


def _precondition(S, cfg):
    res = shrinker_residual(S)[1]
    d = {"residual": res, "residual_tol": cfg.residual_tol}
    if res > cfg.residual_tol:
        return Stage("precondition", False, d, f"shrinker residual {res:.3g} exceeds tolerance"), None
    try:
        fit = asymptotic_cone(S)
    except NoCone as e:
        return Stage("precondition", False, d, f"no asymptotic cone: {e}"), None
    d.update(link=list(fit.cone.angles), cone_error=fit.error, conical=fit.conical)
    if not fit.conical:
        return Stage("precondition", False, d, "ends are not conical"), fit
    e = ent.entropy(S, budget=cfg.entropy_budget, seed=cfg.seed)
    d.update(entropy=e.value, entropy_status=e.status, lambda_1=LAMBDA_1)
    if e.value > LAMBDA_1:
        return Stage("precondition", False, d,
                     f"entropy {e.value:.6f} exceeds the circle's {LAMBDA_1:.6f}"), fit
    return Stage("precondition", True, d), fit


def _flow_one(args):
    G, horizon, save_times = args
    return flow.run(G, horizon, flow.Controller(save_times=save_times))


def _flow_stage(sign, eps, G, trace, Sigma, sp, cone, cfg):
    name = f"flow{'+' if sign > 0 else '-'}"
    d = {"eps": sign * eps, "nodes": G.size, "h": G.h, "status": trace.status,
         "T_est": trace.T_est, "final_time": float(trace.times[-1])}
    msgs = []
    reached = trace.status == flow.REACHED
    if not reached:
        msgs.append(f"singular at T = {trace.T_est:.4g}")
    # SMC lower bound with the perturbation constants
    c = -sp.mu * eps / sp.C0
    alpha = -sp.mu
    d.update(c=c, alpha=alpha)
    try:
        lb = smc_mod.lower_bound_audit(trace, origin(2), c, alpha)
        d.update(smc_margin=lb.margin.tolist(), smc_violations=len(lb.violations),
                 smc_floor=float(np.min(lb.margin) + c))
        if not lb.passed:
            t0 = lb.violations[0][0]
            msgs.append(f"SMC lower bound violated at {len(lb.violations)} node-times from t = {t0:.4g}")
    except smc_mod.HypothesisFailed as e:
        d.update(smc_violations=len(e.nodes))
        msgs.append(str(e))
    min_smc = min(float(np.min(smc_mod.smc(S, origin(2), t).values[smc_mod._boundary_layer(S, 5)]))
                  for t, S in zip(trace.times, trace.surfaces))
    d["smc_min"] = min_smc
    if min_smc <= 0:
        msgs.append("SMC not positive")
    # disjointness from the self-similar flow of Sigma
    neg = [(t, A) for t, A in zip(trace.times, trace.surfaces) if t < 0]
    ss = flow.self_similar_trace(Sigma, [t for t, _ in neg])
    cross, dist, graph = [], [], []
    for (t, A), B in zip(neg, ss.surfaces):
        k, m = separation_from(A, B)
        cross.append(k)
        dist.append(m)
        graph.append(float(np.max(cKDTree(B.pos).query(A.pos[_far_mask(A)])[0])))
    d.update(times=[float(t) for t, _ in neg], crossings=cross, distance=dist, graph_bound=graph)
    if any(cross):
        first = neg[next(i for i, k in enumerate(cross) if k)][0]
        msgs.append(f"meets the self-similar flow from t = {first:.4g}")
    if reached:
        S0 = trace.final
        mask = _far_mask(S0)
        dc = float(np.min(distance_to_cone(S0.pos[mask], cone)))
        d.update(cone_distance=dc, cone_margin=3 * S0.h)
        if dc <= 3 * S0.h:
            msgs.append(f"time-zero slice within {dc:.3g} of the cone")
    return Stage(name, not msgs, d, "; ".join(msgs))


def _topology_stage(traces, cone):
    d = {}
    msgs = []
    images = []
    for sign, tr in traces.items():
        key = "+" if sign > 0 else "-"
        if tr.status != flow.REACHED:
            msgs.append(f"flow{key} did not reach t = 0")
            continue
        S0 = tr.final
        mask = _far_mask(S0)
        star = star_shaped_check(S0, mask)
        d[f"star{key}"] = {"passed": star.passed, "min_x_dot_n": star.min_x_dot_n}
        try:
            pr = radial_projection_check(S0, cone, mask)
            d[f"projection{key}"] = {"injective": pr.injective, "interval": list(pr.interval),
                                     "image": pr.image, "arc": pr.arc}
            if not pr.injective:
                msgs.append(f"radial projection of flow{key} not injective")
            images.append(pr.interval)
        except PreconditionFailed as e:
            msgs.append(f"flow{key}: {e}")
    link = separation_report(cone)
    d["link"] = link.as_dict()
    if not link.separates:
        msgs.append(f"link has {len(link.link)} circles")
    if len(images) == 2:
        comps = sorted(link.components)
        got = sorted(images)
        tol = 1e-2
        match = len(comps) == 2 and all(abs(a - b) <= tol for c, g in zip(comps, got)
                                        for a, b in zip(c, g))
        d["images_match_components"] = match
        if not match:
            msgs.append("images are not the two components")
    return Stage("topology", not msgs, d, "; ".join(msgs))


def theorem_pipeline(specimen, config=None):
    """Run every stage of the separation argument on a conical shrinker.

    Stages: ``precondition`` (residual, conical end, entropy below the
    circle's), ``spectrum``, ``perturbation``, ``entropy``, ``flow+``,
    ``flow-`` and ``topology``. The pipeline stops at the first failing stage
    unless ``config.run_all`` is set; the report names the failing stage.

    Parameters
    ----------
    specimen : ProfileCurve or SurfaceSampleSet
    config : PipelineConfig, optional
    """
    cfg = config or PipelineConfig()
    S = specimen if isinstance(specimen, SurfaceSampleSet) else geometric_data(specimen)
    stages = []

    def done(stage):
        stages.append(stage)
        return not stage.passed and not cfg.run_all

    pre, fit = _precondition(S, cfg)
    if done(pre) or fit is None:
        return PipelineReport(stages)
    cone = fit.cone

    try:
        sp = spectrum.lowest_eigenpair(S)
    except spectrum.SolverFailure as e:
        stages.append(Stage("spectrum", False, {}, str(e)))
        return PipelineReport(stages)
    sd = {"mu": sp.mu, "mu_by_R": [list(p) for p in sp.mu_by_R], "C0": sp.C0, "C1": sp.C1,
          "beta": sp.beta, "monotone": sp.monotone}
    if done(Stage("spectrum", sp.mu < -1 and sp.monotone, sd,
                  "" if sp.mu < -1 else f"mu = {sp.mu:.6g} is not below -1")):
        return PipelineReport(stages)

    Sigma, f = sp.truncated(cfg.R)
    sp_R = replace(sp, f=f, surface=Sigma, core=np.arange(Sigma.size))
    try:
        eps0 = spectrum.find_epsilon0(Sigma, sp_R, cone=cone)
    except spectrum.InvalidPerturbation as e:
        stages.append(Stage("perturbation", False, {}, str(e)))
        return PipelineReport(stages)
    eps = cfg.eps if cfg.eps is not None else 0.5 * eps0
    perts = {s: spectrum.build_perturbation(Sigma, f, s * eps, mu=sp.mu, C0=sp.C0, cone=cone)
             for s in (1, -1)}
    pd = {"eps0": eps0, "eps": eps}
    for s, p in perts.items():
        key = "+" if s > 0 else "-"
        pd[f"checks{key}"] = {"graph": p.checks.graph, "tube": p.checks.tube,
                              "local_graph": p.checks.local_graph, "smc_floor": p.checks.smc_floor}
        pd[f"floor{key}"] = p.smc_floor
    pd["floor_bound"] = perts[1].floor_bound
    if done(Stage("perturbation", all(p.checks.all for p in perts.values()), pd)):
        return PipelineReport(stages)

    grid = spectrum.eps_grid(eps, cfg.entropy_points)
    er = spectrum.entropy_decrease_check(Sigma, f, grid, budget=cfg.entropy_budget, seed=cfg.seed)
    ed = {"eps": er.eps.tolist(), "diffs": er.diffs.tolist(), "base": er.base,
          "quad_coeff": er.quad_coeff, "predicted": er.predicted, "rel_error": er.rel_error,
          "status": er.status, "strict": er.strict}
    if done(Stage("entropy", er.status == "pass", ed,
                  "" if er.status == "pass" else f"entropy decrease {er.status}")):
        return PipelineReport(stages)

    if cfg.flow_R > cfg.R:
        Sigma, f = sp.truncated(cfg.flow_R)
        perts = {s: spectrum.build_perturbation(Sigma, f, s * eps, mu=sp.mu, C0=sp.C0, cone=cone)
                 for s in (1, -1)}
    save = tuple(np.round(np.arange(-1.0, 1e-9, cfg.save_dt), 12))
    inputs = {s: geometric_data(resample(perts[s].surface.curve, spacing=cfg.h)) for s in (1, -1)}
    jobs = [(inputs[s], 0.0, save) for s in (1, -1)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, 2)) as pool:
            out = list(pool.map(_flow_one, jobs))
    else:
        out = [_flow_one(j) for j in jobs]
    traces = dict(zip((1, -1), out))
    stop = False
    for s in (1, -1):
        stop |= done(_flow_stage(s, eps, inputs[s], traces[s], Sigma, sp, cone, cfg))
    if stop:
        return PipelineReport(stages)
    done(_topology_stage(traces, cone))
    return PipelineReport(stages)
