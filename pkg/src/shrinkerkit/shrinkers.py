"""Exact and shot self-shrinkers, and extraction of asymptotic cones.

Rotationally symmetric shrinkers about the x-axis are generated by profile
curves ``(x(s), r(s))`` parameterized by arclength with tangent angle ``phi``:

    x' = cos(phi),  r' = sin(phi),
    phi' = cos(phi)/r - (r cos(phi) - x sin(phi))/2,

which is ``H = x.n/2`` with ``n = (-sin(phi), cos(phi))``.
"""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, root

from .geometry import (
    AXIS, TRUNCATED, Cone, PlanarCurve, ProfileCurve, SurfaceSampleSet,
    axis_end, distance_to_cone, geometric_data, shrinker_residual, truncated_end,
)

SQRT2 = np.sqrt(2.0)
ODE_TOL = 1e-12
AXIS_CUT = 1e-5
MATCH_RADIUS = 0.3


class ShootFailed(RuntimeError):
    """The shooting integration did not produce an admissible profile."""


class RefinementNeeded(RuntimeError):
    """The sampled profile misses the residual tolerance at the finest spacing."""


class NoCone(ValueError):
    """The profile has no asymptotically conical end."""


# ---------------------------------------------------------------------------
# canonical shrinkers


def canonical_curve(kind, n=2, resolution=257, extent=10.0):
    """Generating curve of a canonical shrinker.

    Parameters
    ----------
    kind : {"plane", "sphere", "cylinder", "line", "circle"}
    n : int
        1 for curves, 2 for surfaces of revolution. ``sphere``/``plane`` with
        ``n = 1`` are the circle and the line.
    resolution : int
        Node count.
    extent : float
        Truncation radius of non-compact examples.
    """
    N = int(resolution)
    if n == 1:
        if kind in ("circle", "sphere"):
            u = np.linspace(0.0, 2 * np.pi, N, endpoint=False)
            # clockwise, so rot90 of the tangent points outward
            return PlanarCurve(SQRT2 * np.column_stack((np.cos(u), -np.sin(u))), closed=True)
        if kind in ("line", "plane"):
            x = np.linspace(-extent, extent, N)
            return PlanarCurve(np.column_stack((x, np.zeros_like(x))), closed=False)
        raise ValueError(f"{kind} is not available for n=1")
    if n != 2:
        raise ValueError("only n = 1 and n = 2 are supported")
    if kind == "sphere":
        s = np.linspace(0.0, 2 * np.pi, N)
        P = np.column_stack((-2 * np.cos(s / 2), 2 * np.sin(s / 2)))
        P[0, 1] = P[-1, 1] = 0.0
        return ProfileCurve(P, axis_end(), axis_end())
    if kind == "plane":
        r = np.linspace(0.0, extent, N)
        return ProfileCurve(np.column_stack((np.zeros_like(r), r)), axis_end(),
                            truncated_end(np.inf, extent))
    if kind == "cylinder":
        L = np.sqrt(extent**2 - 2.0)
        x = np.linspace(-L, L, N)
        end = truncated_end(0.0, extent)
        return ProfileCurve(np.column_stack((x, np.full_like(x, SQRT2))), end, end)
    raise ValueError(f"{kind} is not available for n=2")


def canonical_shrinker(kind, n=2, resolution=257, analytic=True, extent=10.0):
    """Sample set of a canonical shrinker.

    With ``analytic=True`` the normals and curvatures are the exact ones at
    the sampled nodes; otherwise they come from :func:`geometric_data`.
    """
    curve = canonical_curve(kind, n, resolution, extent)
    S = geometric_data(curve)
    if not analytic:
        return S
    P = S.pos
    if kind in ("circle", "sphere"):
        rad = np.hypot(P[:, 0], P[:, 1])
        normal = P / rad[:, None]
        k = 1.0 / rad
        k1 = k
        k2 = k if n == 2 else np.zeros_like(k)
    elif kind in ("line", "plane"):
        normal = np.tile([0.0, 1.0] if n == 1 else [-1.0, 0.0], (P.shape[0], 1))
        k1 = np.zeros(P.shape[0])
        k2 = np.zeros(P.shape[0])
    else:
        normal = np.tile([0.0, 1.0], (P.shape[0], 1))
        k1 = np.zeros(P.shape[0])
        k2 = np.full(P.shape[0], 1.0 / SQRT2)
    tangent = np.column_stack((normal[:, 1], -normal[:, 0]))
    return replace(S, normal=normal, tangent=tangent, k1=k1, k2=k2, H=k1 + k2,
                   A2=k1**2 + k2**2)


# ---------------------------------------------------------------------------
# shooting


def profile_rhs(s, y):
    x, r, phi = y
    c, sn = np.cos(phi), np.sin(phi)
    return [c, sn, c / r - 0.5 * (r * c - x * sn)]


def axis_start(x0, s0=1e-5):
    """State at arclength ``s0`` of the regular solution leaving ``(x0, 0)``.

    The profile leaves the axis perpendicularly, heading into ``r > 0``, with
    initial curvature ``phi'(0) = x0/4``.
    """
    k = 0.25 * x0
    # third-order terms: x''' = -k^2 + ..., kept to O(s0^3)
    x = x0 - 0.5 * k * s0**2
    r = s0 - k**2 * s0**3 / 6.0
    phi = 0.5 * np.pi + k * s0
    return np.array([x, r, phi])


def cone_start(theta, rho):
    """State at radius ``rho`` on the asymptotically conical solution of angle ``theta``.

    Uses the expansion ``polar angle = theta + c2/rho^2 + c4/rho^4 + c6/rho^6``
    of the unique solution asymptotic to the cone, and points inward.
    """
    cot = 1.0 / np.tan(theta)
    s = np.sin(theta)
    c2 = cot
    c4 = -cot / (2 * s * s)
    c6 = -c4 * (cot * cot + 3.0)
    vt = theta + c2 / rho**2 + c4 / rho**4 + c6 / rho**6
    dvt = -2 * c2 / rho**3 - 4 * c4 / rho**5 - 6 * c6 / rho**7
    x, r = rho * np.cos(vt), rho * np.sin(vt)
    dx = np.cos(vt) - rho * dvt * np.sin(vt)
    dr = np.sin(vt) + rho * dvt * np.cos(vt)
    return np.array([x, r, np.arctan2(-dr, -dx)])


@dataclass
class _Branch:
    """One integrated arc: dense solution plus how it ended."""

    sol: object
    length: float
    end: str  # "escape", "axis", "budget"
    state: np.ndarray
    minima: list = field(default_factory=list)

    def sample(self, s):
        return self.sol(s)


def _integrate(y0, r_max, budget, track_minima=False):
    def escape(s, y):
        return np.hypot(y[0], y[1]) - (r_max + 1e-9)
    escape.terminal = True
    escape.direction = 1

    def axis(s, y):
        return y[1] - AXIS_CUT
    axis.terminal = True
    axis.direction = -1

    events = [escape, axis]
    if track_minima:
        def rmin(s, y):
            return np.sin(y[2])
        rmin.direction = 1
        events.append(rmin)

    sol = solve_ivp(profile_rhs, (0.0, budget), y0, method="RK45", rtol=ODE_TOL,
                    atol=ODE_TOL, dense_output=True, events=events)
    if sol.status == -1:
        raise ShootFailed(f"integration failed: {sol.message}")
    if sol.t_events[0].size:
        end = "escape"
    elif sol.t_events[1].size:
        end = "axis"
    else:
        end = "budget"
    minima = []
    if track_minima:
        minima = [(float(s), ye) for s, ye in zip(sol.t_events[2], sol.y_events[2])]
    return _Branch(sol.sol, float(sol.t[-1]), end, sol.y[:, -1].copy(), minima)


def _axis_gap(state):
    """Arclength of the osculating-circle run from a near-axis state to the axis."""
    x, r, phi = state
    if abs(np.cos(phi)) > 1e-2:
        raise ShootFailed(
            f"axis collision at x={x:.6g}: profile not perpendicular (cos(phi)={np.cos(phi):.3g})")
    k = profile_rhs(0.0, state)[2]
    L = r / abs(np.sin(phi))
    for _ in range(8):
        # r(L) on the osculating circle and its derivative in L
        rl = r + (np.cos(phi) - np.cos(phi + k * L)) / k if k else r + L * np.sin(phi)
        L -= rl / np.sin(phi + k * L)
    return L


class _Profile:
    """Arclength-parameterized profile assembled from integrated branches."""

    def __init__(self, pieces):
        # pieces: list of (callable(s)->(x, r), length)
        self.pieces = pieces
        self.length = float(sum(L for _, L in pieces))

    def __call__(self, s):
        s = np.atleast_1d(s)
        out = np.empty((s.size, 2))
        start = 0.0
        for k, (fn, L) in enumerate(self.pieces):
            last = k == len(self.pieces) - 1
            m = (s >= start) & ((s <= start + L) if not last else np.ones_like(s, bool))
            if k > 0:
                m &= s > start
            if np.any(m):
                out[m] = fn(s[m] - start)
            start += L
        return out


def _branch_piece(br, reverse=False):
    L = br.length

    def fn(s):
        t = L - s if reverse else s
        y = br.sol(np.clip(t, 0.0, L))
        return np.column_stack((y[0], y[1]))
    return fn, L


def _gap_piece(state, gap, reverse=False):
    """Osculating-circle arc of length ``gap`` closing a branch onto the axis."""
    x, r, phi = state
    k = profile_rhs(0.0, state)[2]

    def arc(t):
        if k == 0:
            return x + t * np.cos(phi), r + t * np.sin(phi)
        return (x + (np.sin(phi + k * t) - np.sin(phi)) / k,
                r + (np.cos(phi) - np.cos(phi + k * t)) / k)

    x_end, _ = arc(gap)

    def fn(s):
        t = np.clip(gap - s if reverse else s, 0.0, gap)
        px, pr = arc(t)
        pts = np.column_stack((px, np.maximum(pr, 0.0)))
        pts[t >= gap] = (x_end, 0.0)
        return pts
    return fn, gap


@dataclass
class ShootResult:
    """A shot rotationally symmetric shrinker.

    Attributes
    ----------
    profile : ProfileCurve
        Uniform-arclength samples of the generating curve.
    residual : float
        max |H - x.n/2| computed by :func:`geometric_data` on ``profile``.
    param : float
        Shooting parameter (radial offset from sqrt(2), or link angle for the
        cone family).
    family : str
    cone : Cone or None
    cone_error : float
        Fit error of the asymptotic cone (nan if none).
    """

    profile: ProfileCurve
    residual: float
    param: float
    family: str
    cone: object = None
    cone_error: float = float("nan")
    evaluator: object = field(default=None, repr=False)

    def resampled(self, spacing):
        """The same profile sampled at a different arclength spacing."""
        return _sample_profile(self.evaluator, self.profile.end_a, self.profile.end_b,
                               self.profile.orientation, spacing)

    @property
    def surface(self):
        return geometric_data(self.profile)


def _sample_profile(evaluator, end_a, end_b, orientation, spacing):
    L = evaluator.length
    N = max(9, int(np.ceil(L / spacing)) + 1)
    s = np.linspace(0.0, L, N)
    P = evaluator(s)
    if end_a.kind == AXIS:
        _snap_axis_node(P, 0)
    if end_b.kind == AXIS:
        _snap_axis_node(P, -1)
    return ProfileCurve(P, end_a, end_b, orientation)


def _snap_axis_node(P, idx, width=6):
    # A smooth profile meets the axis as x = a + b r^2 + c r^4; refit the
    # pole from its neighbours so closing noise is not amplified by 1/h^2.
    near = P[1:width + 1] if idx == 0 else P[-width - 1:-1]
    r2 = near[:, 1] ** 2
    coef = np.polyfit(r2, near[:, 0], 2)
    P[idx] = (coef[-1], 0.0)


def _end_for(branch_end, state):
    if branch_end == "axis":
        return axis_end()
    x, r, phi = state
    slope = np.tan(phi) if abs(np.cos(phi)) > 1e-15 else np.inf
    return truncated_end(slope, float(np.hypot(x, r)))


def _finish(evaluator, end_a, end_b, orientation, tol, param, family, h0=0.01, h_min=2.5e-4):
    h = h0
    while True:
        prof = _sample_profile(evaluator, end_a, end_b, orientation, h)
        _, res = shrinker_residual(geometric_data(prof))
        if res <= tol:
            break
        if h / 2 < h_min:
            raise RefinementNeeded(f"residual {res:.3g} > tol {tol:.3g} at spacing {h:.3g}")
        h /= 2
    cone, err = None, float("nan")
    if TRUNCATED in (end_a.kind, end_b.kind):
        try:
            fit = asymptotic_cone(prof)
            if fit.conical:
                cone, err = fit.cone, fit.error
        except NoCone:
            pass
    return ShootResult(prof, res, float(param), family, cone, err, evaluator)


def shoot_rotsym_shrinker(param, r_max=20.0, tol=1e-6, family="cylinder", budget=None):
    """Shoot a rotationally symmetric shrinker.

    Parameters
    ----------
    param : float
        For ``family="cylinder"``: offset of the initial radius from sqrt(2)
        at the symmetric start ``(0, sqrt(2) + param)`` with horizontal
        tangent (``param = 0`` is the cylinder). For ``family="axis"``: offset
        of the on-axis start ``(sqrt(2) + param, 0)`` (``param = 2 - sqrt(2)``
        is the sphere). For ``family="cone"``: link angle of the cone the
        solution is asymptotic to; the integration starts on that asymptotic
        solution at ``|x| = r_max`` and runs inward.
    r_max : float
        Truncation radius.
    tol : float
        Required max residual of the sampled profile.
    budget : float, optional
        Arclength budget per branch (default ``8 r_max``).

    Raises
    ------
    ShootFailed
        If a branch collides with the axis non-perpendicularly or exhausts
        the arclength budget before reaching ``r_max``.
    RefinementNeeded
        If the residual stays above ``tol`` at the finest sampling.
    """
    if r_max < 10:
        raise ValueError("r_max must be at least 10")
    if tol < 1e-8:
        raise ValueError("tol must be at least 1e-8")
    budget = budget or 8.0 * r_max
    if family == "cylinder":
        r0 = SQRT2 + param
        if r0 <= 0:
            raise ValueError("initial radius must be positive")
        if param == 0.0:
            # exact fixed point of the ODE: the straight cylinder profile
            L = np.sqrt(r_max**2 - 2.0)

            def line(s):
                s = np.atleast_1d(s)
                return np.column_stack((s - L, np.full(s.shape, SQRT2)))
            end = truncated_end(0.0, r_max)
            return _finish(_Profile([(line, 2 * L)]), end, end, 1, tol, param, family)
        fwd = _integrate(np.array([0.0, r0, 0.0]), r_max, budget)
        bwd = _integrate(np.array([0.0, r0, np.pi]), r_max, budget)
        for br in (fwd, bwd):
            if br.end == "budget":
                raise ShootFailed(
                    f"no end reached within arclength {budget:g} (bounded wandering)")
        gaps = {}
        for name, br in (("fwd", fwd), ("bwd", bwd)):
            gaps[name] = _axis_gap(br.state) if br.end == "axis" else 0.0
        pieces = []
        if gaps["bwd"]:
            pieces.append(_gap_piece(bwd.state, gaps["bwd"], reverse=True))
        pieces.append(_branch_piece(bwd, reverse=True))
        pieces.append(_branch_piece(fwd))
        if gaps["fwd"]:
            pieces.append(_gap_piece(fwd.state, gaps["fwd"]))
        ev = _Profile(pieces)
        bstate = bwd.state.copy()
        bstate[2] += np.pi
        end_a = _end_for(bwd.end, bstate)
        end_b = _end_for(fwd.end, fwd.state)
        return _finish(ev, end_a, end_b, 1, tol, param, family)
    if family == "axis":
        x0 = SQRT2 + param
        if x0 == 0:
            raise ValueError("on-axis start at the origin is singular")
        y0 = axis_start(x0)
        br = _integrate(y0, r_max, budget)
        if br.end == "budget":
            raise ShootFailed(f"no end reached within arclength {budget:g} (bounded wandering)")
        pieces = [_straight_from_axis(x0), _branch_piece(br)]
        if br.end == "axis":
            pieces.append(_gap_piece(br.state, _axis_gap(br.state)))
        ev = _Profile(pieces)
        end_b = _end_for(br.end, br.state)
        orient = 1 if x0 < 0 else -1
        return _finish(ev, axis_end(), end_b, orient, tol, param, family)
    if family == "cone":
        theta = float(param)
        if not (0.0 < theta < np.pi):
            raise ValueError("link angle must lie in (0, pi)")
        br = _integrate(cone_start(theta, r_max), r_max, budget)
        if br.end == "budget":
            raise ShootFailed(f"no end reached within arclength {budget:g}")
        y0 = cone_start(theta, r_max)
        end_b = truncated_end(np.tan(y0[2]), r_max)
        if br.end == "axis":
            theta, ev = _match_at_axis(theta, br.state[0], r_max, budget)
            return _finish(ev, axis_end(), end_b, 1, tol, theta, family)
        st = br.state.copy()
        st[2] += np.pi
        end_a = _end_for("escape", st)
        ev = _Profile([_branch_piece(br, reverse=True)])
        return _finish(ev, end_a, end_b, 1, tol, param, family)
    raise ValueError(f"unknown family {family!r}")


def _straight_from_axis(x0, s0=1e-5):
    """Series arc from the axis point ``(x0, 0)`` to the integration start."""
    k = 0.25 * x0

    def fn(s):
        s = np.clip(s, 0.0, s0)
        return np.column_stack((x0 - 0.5 * k * s**2, s - k**2 * s**3 / 6.0))
    return fn, s0


def _ivp(y0, budget, event):
    def axis(s, y):
        return y[1] - AXIS_CUT
    axis.terminal = True
    axis.direction = -1
    sol = solve_ivp(profile_rhs, (0.0, budget), y0, method="RK45", rtol=ODE_TOL,
                    atol=ODE_TOL, dense_output=True, events=[event, axis])
    if sol.status == -1:
        raise ShootFailed(f"integration failed: {sol.message}")
    return sol


def _match_at_axis(theta, x_axis, r_max, budget, r_match=MATCH_RADIUS):
    """Two-sided shooting for an inward solution that lands on the axis.

    Integrating into the axis is unstable (deviations from the regular
    solution grow like 1/r), so the end near the axis is replaced by the
    regular solution leaving ``(x_a, 0)``. The link angle and ``x_a`` are
    polished jointly until both arcs agree in position and direction where
    they cross ``r = r_match``. Returns the polished angle and the evaluator.
    """
    def down(s, y):
        return y[1] - r_match
    down.direction = -1

    def up(s, y):
        return y[1] - r_match
    up.terminal = True
    up.direction = 1

    def arcs(p):
        th, xa = p
        outer = _ivp(cone_start(th, r_max), budget, down)
        hits = outer.t_events[0]
        if not hits.size:
            raise ShootFailed("inward solution never descends to the matching radius")
        inner = _ivp(axis_start(xa), budget, up)
        if not inner.t_events[0].size:
            raise ShootFailed("regular axis solution never reaches the matching radius")
        return outer, hits[-1], inner, inner.t_events[0][0]

    def mismatch(p):
        outer, s_o, inner, s_i = arcs(p)
        yo, yi = outer.sol(s_o), inner.sol(s_i)
        dphi = np.angle(np.exp(1j * (yo[2] - yi[2] - np.pi)))
        return [yo[0] - yi[0], dphi]

    sol = root(mismatch, [theta, x_axis], method="hybr", options={"xtol": 1e-15})
    if not sol.success and np.max(np.abs(sol.fun)) > 1e-10:
        raise ShootFailed(f"axis matching did not converge: {sol.message}")
    theta, xa = sol.x
    outer, s_o, inner, s_i = arcs(sol.x)
    outer_br = _Branch(outer.sol, float(s_o), "match", outer.sol(s_o))
    inner_br = _Branch(inner.sol, float(s_i), "match", inner.sol(s_i))
    ev = _Profile([_straight_from_axis(xa), _branch_piece(inner_br),
                   _branch_piece(outer_br, reverse=True)])
    return float(theta), ev


# ---------------------------------------------------------------------------
# conical specimens


def axis_approach(theta, r_max=20.0, r_thresh=0.5, budget=None):
    """Signed closest approach to the axis of the inward solution from angle ``theta``.

    Returns ``sign(cos(phi)) * r`` at the first local minimum of ``r`` below
    ``r_thresh``, or ``None`` when the solution never comes that close. The
    sign records on which side of the regular axis crossing the solution
    turns back. When the solution reaches the axis cut instead, the value is
    ``AXIS_CUT * cos(phi)`` there, which continues the signed minimum across
    the window of angles that hit the axis.
    """
    budget = budget or 8.0 * r_max
    br = _integrate(cone_start(theta, r_max), r_max, budget, track_minima=True)
    for _, y in br.minima:
        if y[1] < r_thresh:
            return float(np.sign(np.cos(y[2])) * y[1])
    if br.end == "axis":
        return float(AXIS_CUT * np.cos(br.state[2]))
    return None


# link-angle bracket around the axis-approach sign change of the non-flat specimen
SPECIMEN_BRACKET = (1.0197, 1.0198)


def find_conical_specimen(bracket=SPECIMEN_BRACKET, r_max=20.0, tol=1e-6):
    """Bisect the link angle on a bracket where the signed axis approach changes sign."""
    lo, hi = bracket
    flo, fhi = axis_approach(lo, r_max), axis_approach(hi, r_max)
    if flo is None or fhi is None or np.sign(flo) == np.sign(fhi):
        raise ShootFailed("bracket does not straddle an axis crossing")
    theta = brentq(lambda t: axis_approach(t, r_max) or 0.0, lo, hi, xtol=1e-15,
                   rtol=1e-15, maxiter=200)
    return shoot_rotsym_shrinker(theta, r_max=r_max, tol=tol, family="cone")


def sweep_conical_specimens(thetas, r_max=20.0, tol=1e-6, min_curvature=1e-3):
    """Sweep link angles and refine every sign change of the axis approach.

    Returns the non-flat shot specimens found, each regular on the axis
    and asymptotic to a single cone sheet.
    """
    thetas = np.asarray(thetas, dtype=float)
    vals = [axis_approach(t, r_max) for t in thetas]
    found = []
    for k in range(len(thetas) - 1):
        a, b = vals[k], vals[k + 1]
        if a is None or b is None or np.sign(a) == np.sign(b) or a == 0 or b == 0:
            continue
        try:
            res = find_conical_specimen((thetas[k], thetas[k + 1]), r_max, tol)
        except (ShootFailed, RefinementNeeded):
            continue
        if res.profile.end_a.kind != AXIS:
            continue
        if np.sqrt(np.max(geometric_data(res.profile).A2)) < min_curvature:
            continue
        found.append(res)
    return found


# ---------------------------------------------------------------------------
# asymptotic cones


@dataclass(frozen=True)
class ConeFit:
    """Asymptotic cone of a profile.

    Attributes
    ----------
    cone : Cone
    error : float
        Max distance to the fitted cone divided by |x| over the window.
    conical : bool
        Whether every truncated end passes the decay test.
    decay : tuple
        Per-sheet value of ``max |d(angle)/d|x|| * |x|^2`` over the window.
    error_decreasing : bool
        Whether the relative deviation decreases outward over the window.
    """

    cone: Cone
    error: float
    conical: bool
    decay: tuple
    error_decreasing: bool


def asymptotic_cone(profile, window=0.2, decay_threshold=0.5):
    """Fit the asymptotic cone over the outer ``window`` fraction of each end.

    For each truncated end reaching the outer radius, the polar angle is
    fitted as ``theta + c/|x|^2`` by least squares. An end counts as conical
    when ``|d angle/d|x|| * |x|^2`` stays below ``decay_threshold`` (the
    cylinder gives a constant sqrt(2)).

    Raises
    ------
    NoCone
        For closed profiles or when no truncated end reaches the outer radius.
    """
    if not (0 < window <= 0.5):
        raise ValueError("window must lie in (0, 0.5]")
    if isinstance(profile, SurfaceSampleSet):
        profile = profile.curve
    if isinstance(profile, PlanarCurve) or all(profile.axis_ends):
        raise NoCone("closed surface has no asymptotic cone")
    P = profile.nodes
    rad = np.hypot(P[:, 0], P[:, 1])
    rmax = rad.max()
    angles, errors, decays, decreasing = [], [], [], True
    for is_axis, order in zip(profile.axis_ends, (1, -1)):
        if is_axis:
            continue
        Q = P[::order]
        rq = rad[::order]
        if rq[0] < 0.5 * rmax:
            continue
        k = 0
        while k + 1 < len(rq) and rq[k + 1] >= (1 - window) * rq[0]:
            k += 1
        k = max(k, 3)
        W = Q[:k + 1]
        rho = np.hypot(W[:, 0], W[:, 1])
        vt = np.arctan2(W[:, 1], W[:, 0])
        A = np.column_stack((np.ones_like(rho), rho**-2))
        coef, *_ = np.linalg.lstsq(A, vt, rcond=None)
        theta = float(coef[0])
        angles.append(theta)
        dist = distance_to_cone(W, Cone((theta,)) if 0 < theta < np.pi else Cone((0.5,)))
        rel = dist / rho
        errors.append(float(rel.max()))
        order_out = np.argsort(rho)
        relo = rel[order_out]
        decreasing &= bool(np.all(np.diff(relo) <= 1e-12 + 1e-3 * relo[:-1]))
        dv = np.gradient(vt, rho) if np.all(np.diff(rho) != 0) else np.full_like(rho, np.inf)
        decays.append(float(np.max(np.abs(dv) * rho**2)))
    if not angles:
        raise NoCone("no truncated end reaches the outer radius")
    conical = all(d < decay_threshold for d in decays)
    uniq = []
    for t in angles:
        if all(abs(t - u) > 1e-9 for u in uniq):
            uniq.append(t)
    if any(not (0 < t < np.pi) for t in uniq):
        conical = False
        uniq = [min(max(t, 1e-12), np.pi - 1e-12) for t in uniq]
    return ConeFit(Cone(tuple(uniq)), float(max(errors)), conical, tuple(decays), decreasing)
