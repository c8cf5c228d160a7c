"""Discrete differential geometry of planar curves and surfaces of revolution.

Surfaces of revolution are stored through their generating profile in the
half-plane ``{(x, r): r >= 0}``; the symmetry axis is the x-axis. Every
per-node quantity of the surface (position, normal, curvatures) is reported
in that meridian half-plane, which is exact for rotationally symmetric data.

Normals are ``orientation * rot90(T)`` where ``T`` is the unit tangent in
the direction of increasing node index and ``rot90(a, b) = (-b, a)``. The
mean curvature is ``H = div n`` so that the mean curvature vector is
``-H n`` and self-shrinkers satisfy ``H = x.n / 2``.
"""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import kernels

AXIS = "axis"
TRUNCATED = "truncated"


@dataclass(frozen=True)
class End:
    """End condition of an open profile.

    ``kind`` is ``"axis"`` (the profile meets the symmetry axis) or
    ``"truncated"`` (the profile is cut at ``radius`` and continues, beyond
    the cut, along a ray of slope ``dr/dx = slope``).
    """

    kind: str
    slope: float = float("nan")
    radius: float = float("nan")

    def __post_init__(self):
        if self.kind not in (AXIS, TRUNCATED):
            raise ValueError(f"unknown end kind {self.kind!r}")

    @property
    def angle(self):
        """Polar angle in (0, pi) of the end's asymptotic direction."""
        if not np.isfinite(self.slope):
            return 0.5 * np.pi
        a = np.arctan(self.slope)
        return a if a > 0 else a + np.pi

    def token(self):
        if self.kind == AXIS:
            return "axis"
        return f"cone:{self.slope!r}:{self.radius!r}"

    @classmethod
    def parse(cls, token):
        token = token.strip()
        if token == "axis":
            return cls(AXIS)
        if token.startswith("cone:"):
            _, slope, radius = token.split(":")
            return cls(TRUNCATED, float(slope), float(radius))
        raise ValueError(f"bad end token {token!r}")


def axis_end():
    return End(AXIS)


def truncated_end(slope, radius):
    return End(TRUNCATED, float(slope), float(radius))


def _check_spacing(P, closed):
    seg = np.diff(P, axis=0)
    if closed:
        seg = np.vstack((seg, P[:1] - P[-1:]))
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    scale = max(1.0, float(np.max(np.abs(P))))
    if np.any(lengths <= 1e-12 * scale):
        raise ValueError("degenerate spacing: consecutive nodes coincide")
    return lengths


@dataclass(frozen=True)
class PlanarCurve:
    """Polyline in the plane (the n = 1 case)."""

    nodes: np.ndarray
    closed: bool = False
    orientation: int = 1

    def __post_init__(self):
        P = np.array(self.nodes, dtype=float)
        if P.ndim != 2 or P.shape[1] != 2:
            raise ValueError("nodes must be an (N, 2) array")
        if P.shape[0] < 8:
            raise ValueError("a curve needs at least 8 nodes")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        _check_spacing(P, self.closed)
        P.setflags(write=False)
        object.__setattr__(self, "nodes", P)

    n = 1
    kind = "planar"

    @property
    def h(self):
        return float(np.mean(_check_spacing(self.nodes, self.closed)))

    def with_nodes(self, nodes):
        return replace(self, nodes=nodes)

    def flipped(self):
        return replace(self, orientation=-self.orientation)


@dataclass(frozen=True)
class ProfileCurve:
    """Generating curve of a surface of revolution about the x-axis."""

    nodes: np.ndarray
    end_a: End
    end_b: End
    orientation: int = 1
    closed = False

    def __post_init__(self):
        P = np.array(self.nodes, dtype=float)
        if P.ndim != 2 or P.shape[1] != 2:
            raise ValueError("nodes must be an (N, 2) array")
        if P.shape[0] < 8:
            raise ValueError("a profile needs at least 8 nodes")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        _check_spacing(P, False)
        r = P[:, 1]
        if np.any(r < 0):
            raise ValueError("profile has r < 0")
        if np.any(r[1:-1] == 0):
            raise ValueError("r = 0 at an interior node")
        for idx, end in ((0, self.end_a), (-1, self.end_b)):
            if end.kind == AXIS and r[idx] != 0.0:
                raise ValueError("on-axis end must have r = 0")
            if end.kind == TRUNCATED and r[idx] == 0.0:
                raise ValueError("truncated end cannot sit on the axis")
        P.setflags(write=False)
        object.__setattr__(self, "nodes", P)

    n = 2
    kind = "profile"

    @property
    def x(self):
        return self.nodes[:, 0]

    @property
    def r(self):
        return self.nodes[:, 1]

    @property
    def h(self):
        return float(np.mean(_check_spacing(self.nodes, False)))

    @property
    def axis_ends(self):
        return (self.end_a.kind == AXIS, self.end_b.kind == AXIS)

    def axis_slope_defect(self):
        """Largest one-sided |dx/dr| at on-axis ends (0 means perpendicular)."""
        worst = 0.0
        P = self.nodes
        for is_axis, (i0, i1, i2) in zip(self.axis_ends, ((0, 1, 2), (-1, -2, -3))):
            if not is_axis:
                continue
            # second-order one-sided derivative; x is even in r near the axis
            dx = -3 * P[i0, 0] + 4 * P[i1, 0] - P[i2, 0]
            dr = -3 * P[i0, 1] + 4 * P[i1, 1] - P[i2, 1]
            worst = max(worst, abs(dx / dr))
        return worst

    def with_nodes(self, nodes):
        return replace(self, nodes=nodes)

    def flipped(self):
        return replace(self, orientation=-self.orientation)

    def reversed(self):
        return ProfileCurve(self.nodes[::-1].copy(), self.end_b, self.end_a, -self.orientation)


# ---------------------------------------------------------------------------
# quadrature and stencils


def simpson_weights(n):
    """Composite Simpson weights for ``n`` equally spaced nodes (unit spacing)."""
    if n < 2:
        raise ValueError("need at least two nodes")
    w = np.zeros(n)
    m = n - 1
    if m % 2 == 0:
        w[0:m:2] += 1 / 3
        w[1:m:2] += 4 / 3
        w[2:m + 1:2] += 1 / 3
        return w
    if m == 1:
        w[:] = 0.5
        return w
    k = m - 3
    if k > 0:
        w[0:k:2] += 1 / 3
        w[1:k:2] += 4 / 3
        w[2:k + 1:2] += 1 / 3
    w[k:k + 4] += np.array([3, 9, 9, 3]) / 8
    return w


def _extended(P, closed, axis_a, axis_b):
    """Pad nodes with one ghost per side: periodic wrap or axis mirror."""
    if closed:
        return np.vstack((P[-1:], P, P[:1])), True, True
    lo = np.array([[P[1, 0], -P[1, 1]]]) if axis_a else None
    hi = np.array([[P[-2, 0], -P[-2, 1]]]) if axis_b else None
    parts = [p for p in (lo, P, hi) if p is not None]
    return np.vstack(parts), axis_a, axis_b


def parameter_derivatives(P, closed=False, axis_a=False, axis_b=False):
    """First and second derivatives of the nodes w.r.t. node index.

    Centred differences in the interior, mirror ghosts at axis ends,
    periodic wrap for closed curves, second-order one-sided stencils at
    free ends.
    """
    E, ga, gb = _extended(P, closed, axis_a, axis_b)
    off = 1 if ga else 0
    n = P.shape[0]
    Xu = np.empty_like(P)
    Xuu = np.empty_like(P)
    lo = 0 if ga else 1
    hi = n if gb else n - 1
    idx = np.arange(lo, hi) + off
    Xu[lo:hi] = 0.5 * (E[idx + 1] - E[idx - 1])
    Xuu[lo:hi] = E[idx + 1] - 2 * E[idx] + E[idx - 1]
    if not ga:
        Xu[0] = 0.5 * (-3 * P[0] + 4 * P[1] - P[2])
        Xuu[0] = 2 * P[0] - 5 * P[1] + 4 * P[2] - P[3]
    if not gb:
        Xu[-1] = 0.5 * (3 * P[-1] - 4 * P[-2] + P[-3])
        Xuu[-1] = 2 * P[-1] - 5 * P[-2] + 4 * P[-3] - P[-4]
    return Xu, Xuu


def arclength_speed(P, closed=False, axis_a=False, axis_b=False):
    """Fourth-order estimate of ``|dX/du|`` used for quadrature weights."""
    n = P.shape[0]
    if closed:
        E = np.vstack((P[-2:], P, P[:2]))
    else:
        flip = np.array([1.0, -1.0])
        lo = P[2:0:-1] * flip if axis_a else np.full((2, 2), np.nan)
        hi = P[-2:-4:-1] * flip if axis_b else np.full((2, 2), np.nan)
        E = np.vstack((lo, P, hi))
    i = np.arange(n) + 2
    D = (-E[i + 2] + 8 * E[i + 1] - 8 * E[i - 1] + E[i - 2]) / 12.0
    if not closed and n >= 5:
        if not axis_a:
            D[0] = (-25 * P[0] + 48 * P[1] - 36 * P[2] + 16 * P[3] - 3 * P[4]) / 12.0
            D[1] = (-3 * P[0] - 10 * P[1] + 18 * P[2] - 6 * P[3] + P[4]) / 12.0
        if not axis_b:
            D[-1] = (25 * P[-1] - 48 * P[-2] + 36 * P[-3] - 16 * P[-4] + 3 * P[-5]) / 12.0
            D[-2] = (3 * P[-1] + 10 * P[-2] - 18 * P[-3] + 6 * P[-4] - P[-5]) / 12.0
    return np.hypot(D[:, 0], D[:, 1])


# ---------------------------------------------------------------------------
# sample sets


@dataclass(frozen=True)
class SurfaceSampleSet:
    """Per-node geometric data of a planar curve (n=1) or surface of revolution (n=2).

    Attributes
    ----------
    n : int
        Dimension of the hypersurface.
    pos, normal, tangent : (N, 2) arrays
        Position, unit normal and unit tangent in the plane of the curve
        (meridian half-plane for n = 2).
    H, k1, k2 : (N,) arrays
        Mean curvature and principal curvatures (``k2 = 0`` for curves).
    A2 : (N,) array
        ``|A|^2``.
    weight : (N,) array
        Quadrature area weights, so ``sum(g * weight)`` approximates ``int g dmu``.
    speed : (N,) array
        ``|dX/du|`` with respect to node index (arclength per index step).
    """

    n: int
    pos: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    H: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    A2: np.ndarray
    weight: np.ndarray
    speed: np.ndarray
    curve: object = field(repr=False, default=None)

    @property
    def size(self):
        return self.pos.shape[0]

    @property
    def radius(self):
        """|x| per node."""
        return np.hypot(self.pos[:, 0], self.pos[:, 1])

    @property
    def h(self):
        return float(np.mean(self.speed))

    @property
    def closed(self):
        return bool(getattr(self.curve, "closed", False))

    @property
    def compact(self):
        if self.n == 1:
            return self.closed
        return all(self.curve.axis_ends)

    @property
    def x_dot_n(self):
        return np.einsum("ij,ij->i", self.pos, self.normal)

    @property
    def A(self):
        return np.sqrt(self.A2)

    @property
    def arclength(self):
        """Cumulative arclength along the nodes (chord lengths)."""
        seg = np.diff(self.pos, axis=0)
        return np.concatenate(([0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))))

    def truncated_ends(self):
        """List of (node index, outward unit direction) for non-compact ends."""
        c = self.curve
        if c is None or self.closed:
            return []
        out = []
        if self.n == 1:
            flags = (False, False)
        else:
            flags = c.axis_ends
        if not flags[0]:
            out.append((0, -self.tangent[0]))
        if not flags[1]:
            out.append((self.size - 1, self.tangent[-1]))
        return out


def geometric_data(curve):
    """Discrete geometry of a planar curve or profile curve.

    Second-order centred differences with respect to node index (which is
    arclength up to a constant for uniformly resampled curves). For profiles
    the rotational curvature ``(n . e_r)/r`` is replaced at on-axis ends by
    its limit, the profile curvature.

    Parameters
    ----------
    curve : PlanarCurve or ProfileCurve

    Returns
    -------
    SurfaceSampleSet
    """
    P = curve.nodes
    closed = curve.closed
    ax_a, ax_b = curve.axis_ends if curve.n == 2 else (False, False)
    Xu, Xuu = parameter_derivatives(P, closed, ax_a, ax_b)
    speed = np.hypot(Xu[:, 0], Xu[:, 1])
    T = Xu / speed[:, None]
    kappa = (Xu[:, 0] * Xuu[:, 1] - Xu[:, 1] * Xuu[:, 0]) / speed**3
    s = curve.orientation
    normal = s * np.column_stack((-T[:, 1], T[:, 0]))
    k1 = -s * kappa
    if curve.n == 1:
        k2 = np.zeros_like(k1)
        q = np.ones(P.shape[0]) if closed else simpson_weights(P.shape[0])
        weight = q * arclength_speed(P, closed)
    else:
        r = P[:, 1]
        k2 = np.empty_like(k1)
        on = r > 0
        k2[on] = s * T[on, 0] / r[on]
        k2[~on] = k1[~on]
        weight = simpson_weights(P.shape[0]) * arclength_speed(P, False, ax_a, ax_b) * 2 * np.pi * r
    H = k1 + k2
    return SurfaceSampleSet(
        n=curve.n, pos=P.copy(), normal=normal, tangent=T, H=H, k1=k1, k2=k2,
        A2=k1**2 + k2**2, weight=weight, speed=speed, curve=curve,
    )


def shrinker_residual(S):
    """Pointwise ``H - x.n/2`` and its max-norm.

    Returns
    -------
    residual : ndarray
    max_abs : float
    """
    res = S.H - 0.5 * S.x_dot_n
    return res, float(np.max(np.abs(res)))


# ---------------------------------------------------------------------------
# surface calculus for rotationally invariant node fields


def surface_gradient(S, u):
    """Derivative of a node field along the unit tangent."""
    u = np.asarray(u, dtype=float)
    c = S.curve
    closed = S.closed
    ax_a, ax_b = c.axis_ends if S.n == 2 else (False, False)
    du, _ = parameter_derivatives(np.column_stack((u, np.zeros_like(u))), closed, False, False)
    g = du[:, 0] / S.speed
    # the field is even across the axis, so its derivative vanishes there
    if ax_a:
        g[0] = 0.0
    if ax_b:
        g[-1] = 0.0
    return g


def laplacian(S, u):
    """Laplace-Beltrami operator on rotationally invariant node fields.

    Conservative second-order stencil ``(1/w) d/ds (w du/ds)`` with
    ``w = 2 pi r`` for surfaces of revolution and ``w = 1`` for curves;
    on-axis nodes use the limit ``2 u_ss``. Free ends copy their neighbour.
    """
    u = np.asarray(u, dtype=float)
    P = S.pos
    closed = S.closed
    if closed:
        seg = np.roll(P, -1, axis=0) - P
        l_next = np.hypot(seg[:, 0], seg[:, 1])
        l_prev = np.roll(l_next, 1)
        du_next = np.roll(u, -1) - u
        du_prev = u - np.roll(u, 1)
        half = 0.5 * (l_next + l_prev)
        return (du_next / l_next - du_prev / l_prev) / half
    seg = np.diff(P, axis=0)
    l = np.hypot(seg[:, 0], seg[:, 1])
    du = np.diff(u)
    if S.n == 2:
        rm = 0.5 * (P[:-1, 1] + P[1:, 1])
        wm = rm
        wn = P[:, 1]
    else:
        wm = np.ones_like(l)
        wn = np.ones(P.shape[0])
    flux = wm * du / l
    out = np.empty_like(u)
    half = 0.5 * (l[:-1] + l[1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:-1] = (flux[1:] - flux[:-1]) / (wn[1:-1] * half)
    ax_a, ax_b = S.curve.axis_ends if S.n == 2 else (False, False)
    out[0] = 4 * du[0] / l[0] ** 2 if ax_a else out[1]
    out[-1] = -4 * du[-1] / l[-1] ** 2 if ax_b else out[-2]
    return out


def mean_curvature_from_laplacian(S):
    """Independent mean curvature ``-(Delta x) . n``.

    For surfaces of revolution the meridian components of ``Delta x`` are
    ``Delta x`` and ``Delta r - 1/r`` (the azimuthal part of the Cartesian
    coordinate functions), which is compared against ``k1 + k2`` in tests.
    """
    lx = laplacian(S, S.pos[:, 0])
    ly = laplacian(S, S.pos[:, 1])
    if S.n == 2:
        r = S.pos[:, 1]
        with np.errstate(divide="ignore"):
            ly = np.where(r > 0, ly - 1.0 / np.where(r > 0, r, 1.0), 0.0)
    return -(lx * S.normal[:, 0] + ly * S.normal[:, 1])


# ---------------------------------------------------------------------------
# resampling


def _mirror_pad(P, axis_a, axis_b, m):
    lo = P[1:m + 1][::-1] * np.array([1.0, -1.0]) if axis_a else P[:0]
    hi = P[-m - 1:-1][::-1] * np.array([1.0, -1.0]) if axis_b else P[:0]
    return np.vstack((lo, P, hi)), lo.shape[0]


def _chord(P):
    seg = np.diff(P, axis=0)
    return np.concatenate(([0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))))


def resample(curve, count=None, spacing=None):
    """Uniform-arclength resampling by cubic splines in chord length.

    Axis ends are mirrored before fitting so the spline respects the
    reflection symmetry across the axis; closed curves use periodic splines.
    Endpoints of open curves are preserved exactly.

    Parameters
    ----------
    curve : PlanarCurve or ProfileCurve
    count : int, optional
        Number of output nodes (default: unchanged).
    spacing : float, optional
        Target arclength spacing; overrides ``count``.
    """
    P = curve.nodes
    if curve.closed:
        Q = np.vstack((P, P[:1]))
        s = _chord(Q)
        L = s[-1]
        if spacing is not None:
            count = max(8, int(round(L / spacing)))
        count = count or P.shape[0]
        for _ in range(2):
            q = np.linspace(0.0, L, count + 1)[:-1]
            new = kernels.spline_eval(s, Q, q, True)
            Q = np.vstack((new, new[:1]))
            s = _chord(Q)
            L = s[-1]
        return curve.with_nodes(Q[:-1])
    ax = curve.axis_ends if curve.n == 2 else (False, False)
    m = min(4, P.shape[0] - 2)
    E, off = _mirror_pad(P, ax[0], ax[1], m)
    s = _chord(E)
    s0, s1 = s[off], s[off + P.shape[0] - 1]
    L = s1 - s0
    if spacing is not None:
        count = max(8, int(round(L / spacing)) + 1)
    count = count or P.shape[0]
    new = P
    for _ in range(2):
        q = np.linspace(s0, s1, count)
        new = kernels.spline_eval(s, E, q, False)
        new[0] = P[0]
        new[-1] = P[-1]
        if curve.n == 2:
            new[1:-1, 1] = np.maximum(new[1:-1, 1], 1e-300)
        E, off = _mirror_pad(new, ax[0], ax[1], m)
        s = _chord(E)
        s0, s1 = s[off], s[off + count - 1]
    return curve.with_nodes(new)


# ---------------------------------------------------------------------------
# cones


@dataclass(frozen=True)
class Cone:
    """Cone with apex at the origin.

    For ``n = 2`` the link is a set of polar angles in (0, pi) measured from
    the positive x-axis (each angle is one rotationally symmetric sheet);
    for ``n = 1`` it is a set of ray directions (angles in [0, 2 pi)).
    """

    angles: tuple
    n: int = 2

    def __post_init__(self):
        a = tuple(sorted(float(t) for t in self.angles))
        if len(set(a)) != len(a):
            raise ValueError("link angles must be distinct")
        if self.n == 2 and any(not (0.0 < t < np.pi) for t in a):
            raise ValueError("link angles must lie in (0, pi)")
        object.__setattr__(self, "angles", a)


def distance_to_cone(point, cone):
    """Euclidean distance from a point to a cone.

    ``point`` is ``(x, r)`` in the meridian half-plane, a full point of
    R^3 ``(x, y, z)`` (reduced to ``(x, sqrt(y^2+z^2))``), or for ``n = 1``
    a point of the plane. Accepts arrays of points (last axis).
    """
    p = np.asarray(point, dtype=float)
    if cone.n == 2 and p.shape[-1] == 3:
        p = np.stack((p[..., 0], np.hypot(p[..., 1], p[..., 2])), axis=-1)
    x, y = p[..., 0], p[..., 1]
    if cone.n == 2:
        y = np.abs(y)
    best = np.hypot(x, y)
    for t in cone.angles:
        c, s = np.cos(t), np.sin(t)
        along = x * c + y * s
        perp = np.abs(-x * s + y * c)
        best = np.minimum(best, np.where(along >= 0, perp, np.hypot(x, y)))
    return best


def tube_membership(S, cone, rho, R):
    """Whether every node outside ``B_R`` lies within ``rho`` of the cone.

    Returns
    -------
    inside : bool
    worst : float
        Largest ``distance - rho`` over nodes with ``|x| > R`` (``-inf`` if none).
    index : int or None
        Node index of the worst offender.
    """
    far = S.radius > R
    if not np.any(far):
        return True, -np.inf, None
    d = distance_to_cone(S.pos[far], cone) - rho
    k = int(np.argmax(d))
    return bool(d[k] <= 0.0), float(d[k]), int(np.flatnonzero(far)[k])


# ---------------------------------------------------------------------------
# space-time points and normal graphs


@dataclass(frozen=True)
class SpaceTimePoint:
    """A point ``(x0, t0)`` of space-time; ``x0`` has ``n + 1`` components."""

    x: tuple
    t: float

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        if not (np.all(np.isfinite(x)) and np.isfinite(self.t)):
            raise ValueError("space-time point must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))


def origin(n=2, t=0.0):
    return SpaceTimePoint((0.0,) * (n + 1), t)


def normal_graph(S, u, orientation=None):
    """The curve ``x + u n`` over a sample set.

    Axis nodes stay on the axis (their normal is parallel to it). Truncated
    ends keep their slope and move their truncation radius with the node.

    Parameters
    ----------
    S : SurfaceSampleSet
    u : array or float
        Normal displacement per node.
    orientation : int, optional
        Orientation of the new curve relative to the node ordering
        (default: that of ``S``).
    """
    c = S.curve
    P = S.pos + np.asarray(u, dtype=float)[..., None] * S.normal
    orient = c.orientation if orientation is None else orientation
    if S.n == 1:
        return PlanarCurve(P, closed=c.closed, orientation=orient)
    ends = []
    for idx, end in ((0, c.end_a), (-1, c.end_b)):
        if end.kind == AXIS:
            P[idx, 1] = 0.0
            ends.append(end)
        else:
            ends.append(truncated_end(end.slope, float(np.hypot(*P[idx]))))
    return ProfileCurve(P, ends[0], ends[1], orient)


def self_intersections(P, closed=False):
    """Crossings between non-adjacent segments of a polyline.

    Returns a list of ``(i, j, point)`` with segment indices ``i < j``.
    Candidate pairs come from a KD-tree over segment midpoints, so the cost
    is near linear for uniformly sampled curves.
    """
    P = np.asarray(P, dtype=float)
    Q = np.vstack((P, P[:1])) if closed else P
    a, b = Q[:-1], Q[1:]
    m = a.shape[0]
    mid = 0.5 * (a + b)
    half = 0.5 * np.hypot(*(b - a).T)
    tree = cKDTree(mid)
    pairs = tree.query_pairs(2.0 * float(half.max()) + 1e-12, output_type="ndarray")
    if pairs.size == 0:
        return []
    i, j = pairs[:, 0], pairs[:, 1]
    keep = np.abs(i - j) > 1
    if closed:
        keep &= ~(((i == 0) & (j == m - 1)) | ((j == 0) & (i == m - 1)))
    i, j = i[keep], j[keep]
    d1 = b[i] - a[i]
    d2 = b[j] - a[j]
    den = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    w = a[j] - a[i]
    ok = np.abs(den) > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (w[:, 0] * d2[:, 1] - w[:, 1] * d2[:, 0]) / den
        u = (w[:, 0] * d1[:, 1] - w[:, 1] * d1[:, 0]) / den
    hit = ok & (s >= 0) & (s < 1) & (u >= 0) & (u < 1)
    out = []
    for k in np.flatnonzero(hit):
        ii, jj = sorted((int(i[k]), int(j[k])))
        out.append((ii, jj, a[i[k]] + s[k] * d1[k]))
    out.sort(key=lambda e: (e[0], e[1]))
    # a crossing through a vertex is seen by two segment pairs
    tol = 1e-9 * float(half.max())
    kept = []
    for e in out:
        if all(np.hypot(*(e[2] - f[2])) > tol for f in kept):
            kept.append(e)
    return kept


def restrict(S, index):
    """Sample set on a contiguous run of nodes, cut ends becoming truncated ends.

    Per-node data is copied unchanged; only the quadrature weights are
    rebuilt for the shorter node range. Cut ends keep the local tangent
    slope as their asymptotic slope.
    """
    idx = np.asarray(index)
    lo, hi = int(idx[0]), int(idx[-1]) + 1
    if lo == 0 and hi == S.size:
        return S
    c = S.curve
    P = S.pos[lo:hi].copy()
    if S.n == 1:
        curve = PlanarCurve(P, closed=False, orientation=c.orientation)
        w = simpson_weights(P.shape[0]) * arclength_speed(P, False)
    else:
        def cut(k):
            t = S.tangent[k]
            slope = t[1] / t[0] if t[0] != 0 else np.inf
            return truncated_end(slope, float(np.hypot(*S.pos[k])))
        end_a = c.end_a if lo == 0 else cut(lo)
        end_b = c.end_b if hi == S.size else cut(hi - 1)
        curve = ProfileCurve(P, end_a, end_b, c.orientation)
        ax_a, ax_b = curve.axis_ends
        w = simpson_weights(P.shape[0]) * arclength_speed(P, False, ax_a, ax_b) * 2 * np.pi * P[:, 1]
    sl = slice(lo, hi)
    return SurfaceSampleSet(
        n=S.n, pos=P, normal=S.normal[sl].copy(), tangent=S.tangent[sl].copy(),
        H=S.H[sl].copy(), k1=S.k1[sl].copy(), k2=S.k2[sl].copy(), A2=S.A2[sl].copy(),
        weight=w, speed=S.speed[sl].copy(), curve=curve,
    )
