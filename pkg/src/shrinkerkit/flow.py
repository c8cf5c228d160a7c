"""Mean curvature flow of planar curves and surfaces of revolution.

Profiles move by the rotationally symmetric reduction of the flow: the
curvature vector of the generating curve plus the rotational term
``-(n . e_r / r) n``. Each step is linearly implicit in the curve Laplacian
and is followed by uniform-arclength resampling. Truncated ends of
non-compact surfaces stay clamped at their initial position.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .geometry import (
    AXIS, SpaceTimePoint, distance_to_cone, geometric_data, resample, tube_membership,
)

RUNNING = "running"
REACHED = "reached-horizon"
SINGULAR = "singular"


class StepRejected(ValueError):
    """The requested time step exceeds the stability bound."""

    def __init__(self, msg, suggested):
        super().__init__(msg)
        self.suggested = suggested


class BarrierHypothesisFailed(ValueError):
    """The initial surface is not inside the K-tube of the cone."""


def stable_dt(S, cfl=0.4):
    """Largest admissible step ``cfl h^2 / (1 + max|A|^2 h^2)`` with ``h`` the smallest spacing."""
    seg = np.diff(S.pos, axis=0)
    h = float(np.min(np.hypot(seg[:, 0], seg[:, 1])))
    a2 = float(np.max(S.A2))
    return cfl * h * h / (1.0 + a2 * h * h)


def _end_codes(curve):
    if curve.n == 1:
        return kernels.END_CLAMPED, kernels.END_CLAMPED
    return tuple(kernels.END_AXIS if e.kind == AXIS else kernels.END_CLAMPED
                 for e in (curve.end_a, curve.end_b))


def step(S, dt, cfl=0.4, count=None, order=2):
    """Advance a sample set by one time step.

    Parameters
    ----------
    S : SurfaceSampleSet
    dt : float
    count : int, optional
        Node count after resampling (default: unchanged).
    order : {1, 2}
        1 is the plain linearly implicit step; 2 extrapolates it with two
        half steps.

    Raises
    ------
    StepRejected
        If ``dt`` exceeds :func:`stable_dt`; the suggested value is attached.
    """
    bound = stable_dt(S, cfl)
    if dt > bound * (1 + 1e-12):
        raise StepRejected(f"dt = {dt:.3g} exceeds the stability bound {bound:.3g}", bound)
    c = S.curve
    a, b = _end_codes(c)
    rot, per = c.n == 2, bool(c.closed)

    def advance(x, y, tau):
        return kernels.curve_step(x, y, float(tau), a, b, rot, per)

    x0 = np.ascontiguousarray(S.pos[:, 0])
    y0 = np.ascontiguousarray(S.pos[:, 1])
    x1, y1 = advance(x0, y0, dt)
    if order == 1:
        P = np.column_stack((x1, y1))
    else:
        # one Richardson extrapolation of the linearly implicit step
        xh, yh = advance(*advance(x0, y0, 0.5 * dt), 0.5 * dt)
        P = np.column_stack((2 * xh - x1, 2 * yh - y1))
    if c.n == 2:
        P[1:-1, 1] = np.maximum(P[1:-1, 1], 1e-300)
    return geometric_data(resample(c.with_nodes(P), count=count))


@dataclass
class Controller:
    """Time-step and singularity policy of :func:`run`.

    Attributes
    ----------
    dt : float or None
        Requested step; ``None`` uses the stability bound.
    cfl : float
        Safety factor of the stability bound.
    trigger : float
        ``max |A|`` above which a growing curvature is declared singular.
    refine_at : float
        Halve the spacing when ``max |A| h`` exceeds this.
    max_nodes : int
        Cap on refinement.
    save_times : sequence of float or None
        Times at which slices are stored (hit exactly). ``None`` stores
        every ``save_every``-th step.
    """

    dt: float = None
    cfl: float = 0.4
    trigger: float = 1e3
    refine_at: float = 0.25
    max_nodes: int = 200000
    save_times: tuple = None
    save_every: int = 50
    order: int = 2

    def __post_init__(self):
        if self.save_times is not None:
            self.save_times = tuple(float(s) for s in self.save_times)

    def as_dict(self):
        return {"dt": self.dt, "cfl": self.cfl, "trigger": self.trigger,
                "refine_at": self.refine_at, "max_nodes": self.max_nodes,
                "save_times": None if self.save_times is None else list(self.save_times),
                "save_every": self.save_every, "order": self.order}


@dataclass
class FlowTrace:
    """Saved slices of a flow with its step history and final status."""

    times: list
    surfaces: list
    controller: Controller
    status: str = RUNNING
    T_est: float = float("nan")
    x0_est: tuple = None
    step_times: list = field(default_factory=list, repr=False)
    max_A: list = field(default_factory=list, repr=False)
    steps: int = 0

    @property
    def singular(self):
        return self.status == SINGULAR

    @property
    def final(self):
        return self.surfaces[-1]

    def at(self, t, tol=1e-9):
        k = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[k] - t) > tol:
            raise KeyError(f"no saved slice at t = {t}")
        return self.surfaces[k]


def _estimate_singularity(ts, amax, S, window=8):
    """Blow-up time from ``1 / max|A|^2`` extrapolated to zero, and the blow-up point."""
    t = np.asarray(ts[-window:])
    g = 1.0 / np.asarray(amax[-window:]) ** 2
    # fit in a centred, scaled time variable so the normal equations stay well conditioned
    t_c = t[-1]
    scale = max(float(t[-1] - t[0]), 1e-300)
    u = (t - t_c) / scale
    lin = np.polyfit(u, g, 1)
    T = t_c + scale * (-lin[1] / lin[0]) if lin[0] != 0 else t[-1]
    if t.size >= 4:
        quad = np.polyfit(u, g, 2)
        roots = t_c + scale * np.roots(quad)
        real = roots[np.isreal(roots)].real
        real = real[real >= t[-1] - 1e-15]
        if real.size:
            # quadratic correction (Richardson-style) when it stays near the linear root
            Tq = float(real.min())
            if abs(Tq - T) < 10 * (t[-1] - t[0]):
                T = Tq
    T = max(float(T), float(t[-1]))
    k = int(np.argmax(S.A2))
    p = S.pos[k]
    x0 = (float(p[0]), float(p[1])) if S.n == 1 else (float(p[0]), float(p[1]), 0.0)
    return T, x0


def run(initial, horizon, controller=None, t_start=-1.0, count=None):
    """Integrate the flow from ``t_start`` until ``horizon`` or a singularity.

    Parameters
    ----------
    initial : SurfaceSampleSet
    horizon : float
    controller : Controller, optional
    t_start : float
        Initial time (the flows of interest start at ``-1``).
    count : int, optional
        Resample the initial surface to this many nodes first.

    Returns
    -------
    FlowTrace
    """
    ctl = controller or Controller()
    S = initial if count is None else geometric_data(resample(initial.curve, count=count))
    t = float(t_start)
    saves = None
    if ctl.save_times is not None:
        saves = sorted(float(s) for s in ctl.save_times if t < s <= horizon + 1e-15)
    trace = FlowTrace([t], [S], ctl)
    trace.step_times.append(t)
    trace.max_A.append(float(np.max(S.A)))
    k = 0
    while t < horizon - 1e-15:
        amax = float(np.max(S.A))
        if amax * S.h > ctl.refine_at and 2 * S.size <= ctl.max_nodes:
            S = geometric_data(resample(S.curve, count=2 * S.size - 1))
        bound = stable_dt(S, ctl.cfl)
        dt = bound if ctl.dt is None else min(ctl.dt, bound)
        dt = min(dt, horizon - t)
        hit = bool(saves) and saves[0] - t <= dt
        if hit:
            dt = saves[0] - t
        S = step(S, dt, ctl.cfl, order=ctl.order)
        t = saves.pop(0) if hit else t + dt
        k += 1
        amax = float(np.max(S.A))
        trace.step_times.append(t)
        trace.max_A.append(amax)
        if hit:
            trace.times.append(t)
            trace.surfaces.append(S)
        elif saves is None and k % ctl.save_every == 0:
            trace.times.append(t)
            trace.surfaces.append(S)
        if not np.all(np.isfinite(S.pos)):
            trace.status = SINGULAR
            break
        m = trace.max_A
        if amax > ctl.trigger and len(m) >= 4 and m[-1] > m[-2] > m[-3] > m[-4]:
            trace.status = SINGULAR
            break
    trace.steps = k
    if trace.times[-1] != t and np.all(np.isfinite(S.pos)):
        trace.times.append(t)
        trace.surfaces.append(S)
    if trace.status == SINGULAR:
        trace.T_est, trace.x0_est = _estimate_singularity(trace.step_times, trace.max_A,
                                                          trace.surfaces[-1])
    else:
        trace.status = REACHED
    return trace


def self_similar_trace(S, times, controller=None):
    """The shrinking flow ``sqrt(-t) S`` sampled at ``times < 0``."""
    out = []
    for t in times:
        if t >= 0:
            raise ValueError("self-similar slices need t < 0")
        c = np.sqrt(-t)
        curve = S.curve.with_nodes(S.pos * c)
        if S.n == 2:
            ends = [e if e.kind == AXIS else replace(e, radius=e.radius * c)
                    for e in (curve.end_a, curve.end_b)]
            curve = replace(curve, end_a=ends[0], end_b=ends[1])
        out.append(geometric_data(curve))
    tr = FlowTrace(list(map(float, times)), out, controller or Controller(), REACHED)
    tr.step_times = list(tr.times)
    tr.max_A = [float(np.max(s.A)) for s in out]
    return tr


# ---------------------------------------------------------------------------
# rescaling and audits


@dataclass
class RescaledSlice:
    s: float
    t: float
    surface: object
    defect: float


def stationarity_defect(S):
    """``int |H - x.n/2|^2 exp(-|x|^2/4) dmu``."""
    r = S.H - 0.5 * S.x_dot_n
    return float(np.sum(r * r * np.exp(-S.radius**2 / 4) * S.weight))


def parabolic_rescale(trace, X0):
    """Rescaled slices ``(T - t)^(-1/2) (S_t - x0)`` with ``s = -log(T - t)``.

    Parameters
    ----------
    trace : FlowTrace
    X0 : SpaceTimePoint
        ``X0.t`` must exceed every trace time; for surfaces of revolution
        ``X0.x`` must lie on the axis.
    """
    if not isinstance(X0, SpaceTimePoint):
        X0 = SpaceTimePoint(*X0)
    T = X0.t
    if any(t >= T for t in trace.times):
        raise ValueError("the rescaling time must exceed every slice time")
    out = []
    for t, S in zip(trace.times, trace.surfaces):
        if S.n == 2:
            if any(abs(v) > 0 for v in X0.x[1:]):
                raise ValueError("rescaling center must lie on the symmetry axis")
            shift = np.array([X0.x[0], 0.0])
        else:
            shift = np.asarray(X0.x[:2], dtype=float)
        lam = 1.0 / np.sqrt(T - t)
        curve = S.curve.with_nodes((S.pos - shift) * lam)
        if S.n == 2:
            ends = []
            for e, p in ((curve.end_a, curve.nodes[0]), (curve.end_b, curve.nodes[-1])):
                ends.append(e if e.kind == AXIS else replace(e, radius=float(np.hypot(*p))))
            curve = replace(curve, end_a=ends[0], end_b=ends[1])
        R = geometric_data(curve)
        out.append(RescaledSlice(-np.log(T - t), t, R, stationarity_defect(R)))
    return out


@dataclass
class AvoidanceReport:
    times: np.ndarray
    distance: np.ndarray
    initial: float
    violations: list
    tol: float

    @property
    def ok(self):
        return not self.violations


def avoidance_audit(traceA, traceB, tol=1e-9, time_tol=1e-9):
    """Distance between two flows on their common saved times.

    For surfaces of revolution the distance of the profiles in the
    meridian half-plane equals the distance in space.
    """
    tb = np.asarray(traceB.times)
    times, dist = [], []
    for t, A in zip(traceA.times, traceA.surfaces):
        k = int(np.argmin(np.abs(tb - t)))
        if abs(tb[k] - t) > time_tol:
            continue
        B = traceB.surfaces[k]
        QA = np.vstack((A.pos, A.pos[:1])) if A.closed else A.pos
        QB = np.vstack((B.pos, B.pos[:1])) if B.closed else B.pos
        times.append(t)
        dist.append(kernels.polyline_distance(np.ascontiguousarray(QA), np.ascontiguousarray(QB)))
    if not times:
        raise ValueError("the traces share no saved times")
    d = np.asarray(dist)
    viol = [(float(t), float(v)) for t, v in zip(times, d) if v < d[0] - tol]
    return AvoidanceReport(np.asarray(times), d, float(d[0]), viol, tol)


@dataclass
class BarrierReport:
    """Cone barrier constants per saved time.

    ``K_prime[i]`` is the smallest constant for which every tube inclusion
    holds at ``times[i]`` (``inf`` when none up to ``K_max`` does);
    ``violations`` lists ``(t, R, excess)`` at ``K_max`` and is never
    clamped.
    """

    K: float
    times: np.ndarray
    K_prime: np.ndarray
    violations: list
    K_max: float

    @property
    def Kprime(self):
        return float(np.max(self.K_prime))

    @property
    def ok(self):
        return not self.violations


def _barrier_excess(S, cone, Kp, R, tau, n, d):
    far = S.radius > Kp * (R + np.sqrt(2 * n * tau))
    if not np.any(far):
        return -np.inf
    return float(np.max(d[far] - Kp * (1 + 2 * n * tau) / R))


def cone_barrier_audit(trace, cone, K, R_grid=(1.0, 2.0, 4.0, 8.0, 16.0), t_start=-1.0,
                       K_max=1e3, iters=50):
    """Smallest barrier constant ``K'`` per time for the tube inclusions about ``cone``.

    Raises
    ------
    BarrierHypothesisFailed
        If the first slice is not inside ``T_{1/R}(cone)`` outside ``B_{KR}``.
    """
    S0 = trace.surfaces[0]
    for R in R_grid:
        inside, worst, _ = tube_membership(S0, cone, 1.0 / R, K * R)
        if not inside:
            raise BarrierHypothesisFailed(f"initial slice leaves the 1/{R:g} tube by {worst:.3g}")
    Kp_all, viol = [], []
    for t, S in zip(trace.times, trace.surfaces):
        tau = t - t_start
        n = S.n
        d = distance_to_cone(S.pos, cone)
        worst_K = K
        for R in R_grid:
            if _barrier_excess(S, cone, K, R, tau, n, d) <= 0:
                continue
            if _barrier_excess(S, cone, K_max, R, tau, n, d) > 0:
                viol.append((float(t), float(R), _barrier_excess(S, cone, K_max, R, tau, n, d)))
                worst_K = np.inf
                continue
            lo, hi = K, K_max
            for _ in range(iters):
                mid = np.sqrt(lo * hi)
                if _barrier_excess(S, cone, mid, R, tau, n, d) <= 0:
                    hi = mid
                else:
                    lo = mid
            worst_K = max(worst_K, hi)
        Kp_all.append(worst_K)
    return BarrierReport(float(K), np.asarray(trace.times), np.asarray(Kp_all), viol, K_max)
