"""Shrinker mean curvature along flows and its maximum-principle audits.

The shrinker mean curvature of a slice ``S_t`` relative to a space-time
point ``(x0, t0)`` is ``S = 2 (t0 - t) H - (x - x0) . n``. Along a mean
curvature flow it satisfies ``(d/dt - Delta) S = |A|^2 S`` with ``d/dt`` the
normal time derivative; the audits below measure that equation and the
lower and curvature bounds it propagates.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import SpaceTimePoint, laplacian, surface_gradient


class CorrespondenceLost(RuntimeError):
    """Nearest-point projection between slices left the rejection radius."""


class HypothesisFailed(ValueError):
    """A hypothesis of an audit fails on the initial slice or parabolic boundary.

    ``nodes`` holds the offending node indices.
    """

    def __init__(self, msg, nodes=()):
        super().__init__(msg)
        self.nodes = list(nodes)


def _as_point(X0, n):
    if not isinstance(X0, SpaceTimePoint):
        X0 = SpaceTimePoint(*X0)
    if len(X0.x) != n + 1:
        raise ValueError(f"reference point needs {n + 1} coordinates")
    if n == 2 and any(abs(v) > 0 for v in X0.x[1:]):
        raise ValueError("for surfaces of revolution the reference point must lie on the axis")
    return X0


def _planar(X0, n):
    return np.array([X0.x[0], 0.0]) if n == 2 else np.asarray(X0.x[:2], dtype=float)


def barrier(S, t):
    """``eta = 1 + |x|^2 + 2 n (t + 1)``."""
    return 1.0 + S.radius**2 + 2 * S.n * (t + 1.0)


@dataclass
class SMCField:
    values: np.ndarray
    X0: SpaceTimePoint
    t: float
    eta: np.ndarray


def smc(S, X0, t):
    """Shrinker mean curvature of the slice ``S`` at time ``t`` relative to ``X0``."""
    X0 = _as_point(X0, S.n)
    d = S.pos - _planar(X0, S.n)
    vals = 2 * (X0.t - t) * S.H - np.einsum("ij,ij->i", d, S.normal)
    return SMCField(vals, X0, float(t), barrier(S, t))


FAR_FIELD = 0.8


def _boundary_layer(S, layer, axis_layer=0, far=FAR_FIELD):
    """Nodes an audit may judge.

    Drops ``layer`` nodes at truncated ends, everything beyond ``far`` times
    the smallest truncation radius (the clamped far-field boundary is not the
    true flow there) and ``axis_layer`` nodes at on-axis ends.
    """
    keep = np.ones(S.size, dtype=bool)
    ends = S.truncated_ends()
    if ends and far is not None:
        r = S.radius
        keep &= r <= far * min(r[k] for k, _ in ends)
    if S.n == 2 and axis_layer > 0 and S.curve is not None:
        # rotational curvature carries an O(h^2 / r) error next to the axis,
        # which second differences amplify; those nodes are left out of residuals
        a, b = S.curve.axis_ends
        if a:
            keep[:axis_layer] = False
        if b:
            keep[-axis_layer:] = False
    if layer <= 0:
        return keep
    for k, _ in ends:
        if k == 0:
            keep[:layer] = False
        else:
            keep[-layer:] = False
    return keep


# ---------------------------------------------------------------------------
# slice correspondence and material derivatives


def _arclength_fraction(P, closed):
    seg = np.diff(np.vstack((P, P[:1])) if closed else P, axis=0)
    s = np.concatenate(([0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))))
    return s[:P.shape[0]] / s[-1]


def _project(P, Q, closed, window=0.02, k=16):
    """Nearest point of polyline ``Q`` to each point of ``P`` as (segment, fraction, distance).

    Candidates are restricted to nodes of ``Q`` whose arclength fraction lies
    within ``window`` of the query's (at least 8 nodes), so that near a
    self-crossing the match cannot jump to the other branch. Points with no
    admissible candidate get distance ``inf``.
    """
    m = Q.shape[0]
    k = min(k, m)
    sP = _arclength_fraction(P, closed)
    sQ = _arclength_fraction(Q, closed)
    w = max(window, 8.0 / m)
    _, cand = cKDTree(Q).query(P, k=k)
    gap = np.abs(sQ[cand] - sP[:, None])
    if closed:
        gap = np.minimum(gap, 1 - gap)
    ok = gap <= w
    pick = np.argmax(ok, axis=1)
    j = cand[np.arange(P.shape[0]), pick]
    lost = ~ok.any(axis=1)
    best_d = np.full(P.shape[0], np.inf)
    best_seg = np.zeros(P.shape[0], dtype=int)
    best_f = np.zeros(P.shape[0])
    for off in (-1, 0):
        seg = j + off
        if closed:
            seg = seg % m
            nxt = (seg + 1) % m
        else:
            seg = np.clip(seg, 0, m - 2)
            nxt = seg + 1
        a, b = Q[seg], Q[nxt]
        ab = b - a
        L2 = np.einsum("ij,ij->i", ab, ab)
        fr = np.clip(np.einsum("ij,ij->i", P - a, ab) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
        d = np.hypot(*(a + fr[:, None] * ab - P).T)
        better = d < best_d
        best_d[better] = d[better]
        best_seg[better] = seg[better]
        best_f[better] = fr[better]
    best_d[lost] = np.inf
    return best_seg, best_f, best_d


def _interp(values, seg, fr, closed):
    nxt = (seg + 1) % values.size if closed else seg + 1
    return (1 - fr) * values[seg] + fr * values[nxt]


def material_derivative(trace, fields, k, layer=5):
    """Central normal-time derivative of a node field at saved slice ``k``.

    Nodes of slice ``k`` are matched to the neighbouring slices by
    nearest-point projection; a match farther than
    ``2 max(h, |H| dt) + h`` raises :class:`CorrespondenceLost`.
    """
    S = trace.surfaces[k]
    t0, t1, t2 = trace.times[k - 1], trace.times[k], trace.times[k + 1]
    keep = _boundary_layer(S, layer)
    vals = []
    for j, tj in ((k - 1, t0), (k + 1, t2)):
        Q = trace.surfaces[j]
        seg, fr, d = _project(S.pos, Q.pos, Q.closed)
        limit = 2 * np.maximum(S.h, np.abs(S.H) * abs(tj - t1)) + max(S.h, Q.h)
        bad = keep & (d > limit)
        if np.any(bad):
            raise CorrespondenceLost(
                f"{int(bad.sum())} nodes of the slice at t = {t1:.6g} lose their match at t = {tj:.6g}")
        vals.append(_interp(np.asarray(fields[j], dtype=float), seg, fr, Q.closed))
    return (vals[1] - vals[0]) / (t2 - t0)


@dataclass
class EvolutionResidual:
    """Max-norm per interior saved time of ``dS/dt - Delta S - |A|^2 S``."""

    times: np.ndarray
    max_norm: np.ndarray

    @property
    def worst(self):
        return float(np.max(self.max_norm))


def smc_evolution_residual(trace, X0, layer=5, axis_layer=4):
    """Residual of the shrinker mean curvature evolution equation along a trace.

    Raises
    ------
    ValueError
        If fewer than three slices are saved.
    CorrespondenceLost
    """
    if len(trace.times) < 3:
        raise ValueError("need at least three saved slices")
    fields = [smc(S, X0, t).values for t, S in zip(trace.times, trace.surfaces)]
    times, norms = [], []
    for k in range(1, len(trace.times) - 1):
        S = trace.surfaces[k]
        dS = material_derivative(trace, fields, k, layer)
        res = dS - laplacian(S, fields[k]) - S.A2 * fields[k]
        keep = _boundary_layer(S, layer, axis_layer)
        times.append(trace.times[k])
        norms.append(float(np.max(np.abs(res[keep]))))
    return EvolutionResidual(np.asarray(times), np.asarray(norms))


def convergence_order(coarse, fine, factor=2.0):
    """Observed order from two worst-case residuals under refinement by ``factor``."""
    return float(np.log(coarse / fine) / np.log(factor))


# ---------------------------------------------------------------------------
# lower bound and curvature ratio


@dataclass
class LowerBoundReport:
    """``min (S eta^alpha - c)`` per time; ``violations`` are node-time pairs below ``-tol``."""

    times: np.ndarray
    margin: np.ndarray
    violations: list
    c: float
    alpha: float

    @property
    def passed(self):
        return not self.violations

    @property
    def worst(self):
        return float(np.min(self.margin))


def lower_bound_audit(trace, X0, c, alpha, tol=0.0, layer=5, t_start=-1.0):
    """Propagated lower bound ``S >= c (1 + |x|^2 + 2n(t+1))^(-alpha)`` on every slice.

    Raises
    ------
    HypothesisFailed
        If the first slice violates ``S >= c (1 + |x|^2)^(-alpha)``.
    """
    out_t, out_m, viol = [], [], []
    for i, (t, S) in enumerate(zip(trace.times, trace.surfaces)):
        keep = _boundary_layer(S, layer)
        F = smc(S, X0, t)
        eta = 1.0 + S.radius**2 + 2 * S.n * (t - t_start)
        u = F.values * eta**alpha - c
        if i == 0:
            bad = np.flatnonzero(keep & (u < -tol))
            if bad.size:
                raise HypothesisFailed(
                    f"initial slice violates the lower bound at {bad.size} nodes", bad)
        out_t.append(float(t))
        out_m.append(float(np.min(u[keep])))
        for k in np.flatnonzero(keep & (u < -tol)):
            viol.append((float(t), int(k), float(u[k])))
    return LowerBoundReport(np.asarray(out_t), np.asarray(out_m), viol, float(c), float(alpha))


def _curvature_derivatives(S):
    """``|grad A|`` and an estimate of ``|grad^2 A|`` from meridian derivatives.

    For surfaces of revolution Codazzi gives ``|grad A|^2 = k1'^2 + 3 k2'^2``;
    the same pattern with second derivatives is used for ``grad^2 A``.
    """
    d1 = surface_gradient(S, S.k1)
    dd1 = surface_gradient(S, d1)
    if S.n == 1:
        return np.abs(d1), np.abs(dd1)
    d2 = surface_gradient(S, S.k2)
    dd2 = surface_gradient(S, d2)
    return np.sqrt(d1**2 + 3 * d2**2), np.sqrt(dd1**2 + 3 * dd2**2)


def curvature_sup(trace, R, layer=5):
    """Trace supremum of ``max(|A| + |grad A| + |grad^2 A| outside B_R, |A| on the first slice)``."""
    m = float(np.max(trace.surfaces[0].A))
    for S in trace.surfaces:
        keep = _boundary_layer(S, layer) & (S.radius > R)
        if not np.any(keep):
            continue
        g1, g2 = _curvature_derivatives(S)
        m = max(m, float(np.max((S.A + g1 + g2)[keep])))
    return m


@dataclass
class RatioReport:
    """``max |A| / (c^-1 M eta_R^alpha S)`` per time; ``breaches`` list nodes with ``S <= 0``."""

    times: np.ndarray
    ratio: np.ndarray
    M: float
    breaches: list
    tol: float

    @property
    def worst(self):
        return float(np.max(self.ratio))

    @property
    def passed(self):
        return not self.breaches and self.worst <= 1 + self.tol


def curvature_ratio_audit(trace, X0, c, alpha, R, M=None, tol=1e-6, layer=5, t_start=-1.0):
    """Curvature bound ``|A| <= c^-1 M (1 + |x|^2 + R^2 + 2n(t+1))^alpha S`` along a trace.

    ``M`` defaults to :func:`curvature_sup` on the trace (a trace supremum,
    since later times are not available).
    """
    M = curvature_sup(trace, R, layer) if M is None else float(M)
    out_t, out_r, breaches = [], [], []
    for t, S in zip(trace.times, trace.surfaces):
        keep = _boundary_layer(S, layer)
        F = smc(S, X0, t).values
        etaR = 1.0 + S.radius**2 + R * R + 2 * S.n * (t - t_start)
        bad = np.flatnonzero(keep & (F <= 0))
        breaches.extend((float(t), int(k)) for k in bad)
        good = keep & (F > 0)
        r = S.A[good] / (M / c * etaR[good] ** alpha * F[good]) if np.any(good) else np.zeros(1)
        out_t.append(float(t))
        out_r.append(float(np.max(r)) if r.size else 0.0)
    return RatioReport(np.asarray(out_t), np.asarray(out_r), M, breaches, tol)


# ---------------------------------------------------------------------------
# maximum principle


@dataclass
class MaxPrincipleReport:
    """Outcome of the weighted maximum-principle audit.

    ``pde_residual`` is the min over interior slices of
    ``(d/dt - Delta) u - a . grad u - b u`` divided by the sum of the absolute
    values of its four terms (hypothesis (i) holds when it is at least
    ``-pde_tol``; the time derivative is a central difference over saved
    slices, so this is first order in their spacing); ``integrals`` are the Gaussian-weighted integrals of
    hypothesis (iii); ``floor`` is ``min u - c0 exp(M1 (t+1))`` per time.
    """

    times: np.ndarray
    floor: np.ndarray
    M0: float
    M1: float
    pde_residual: float
    integrals: np.ndarray
    tol: float
    pde_tol: float = 0.05

    @property
    def hypotheses_ok(self):
        return self.pde_residual >= -self.pde_tol and np.all(np.isfinite(self.integrals))

    @property
    def conclusion_ok(self):
        return bool(np.all(self.floor >= -self.tol))

    @property
    def passed(self):
        return self.hypotheses_ok and self.conclusion_ok


def max_principle_audit(trace, u, a, b, R, c0, tol=1e-6, pde_tol=0.05, layer=5, T=None,
                        t_start=-1.0, axis_layer=4):
    """Audit of the weighted maximum principle on ``S_t \\ B_R``.

    Parameters
    ----------
    trace : FlowTrace
    u, a, b : sequences of node arrays (one per saved slice) or callables
        ``f(S, t)``. ``a`` is the tangential drift (its component along the
        unit meridian tangent) and ``b`` the zeroth-order coefficient.
    R : float
    c0 : float
        Lower bound on the parabolic boundary (``u >= c0`` is required).
    T : float, optional
        Time of the Gaussian weight in hypothesis (iii); defaults past the
        last slice.

    Raises
    ------
    HypothesisFailed
        If ``u < c0`` on the parabolic boundary.
    """
    times = list(trace.times)

    def per_slice(g):
        return [np.asarray(g(S, t) if callable(g) else g[i], dtype=float) * np.ones(S.size)
                for i, (t, S) in enumerate(zip(times, trace.surfaces))]

    U, A_, B_ = per_slice(u), per_slice(a), per_slice(b)
    masks = [_boundary_layer(S, layer) & (S.radius >= R) for S in trace.surfaces]
    M0 = max(float(np.max(A_[i][m] ** 2 + np.abs(B_[i][m]))) for i, m in enumerate(masks) if m.any())
    if not np.isfinite(M0):
        raise HypothesisFailed("drift or zeroth-order coefficient is unbounded")
    M1 = min(min(float(np.min(B_[i][m])) for i, m in enumerate(masks) if m.any()), 0.0)
    # parabolic boundary: the first slice outside B_R and the sphere |x| = R
    bad = np.flatnonzero(masks[0] & (U[0] < c0 - tol))
    if bad.size:
        raise HypothesisFailed(f"u < c0 on the initial slice at {bad.size} nodes", bad)
    if R > 0:
        for i, S in enumerate(trace.surfaces):
            rim = _boundary_layer(S, layer) & (np.abs(S.radius - R) <= S.h)
            bad = np.flatnonzero(rim & (U[i] < c0 - tol))
            if bad.size:
                raise HypothesisFailed(f"u < c0 on |x| = R at t = {times[i]:.6g}", bad)
    T = times[-1] + max(times[-1] - times[0], 1.0) if T is None else T
    integrals, floor = [], []
    for i, (t, S) in enumerate(zip(times, trace.surfaces)):
        m = masks[i]
        phi = (4 * np.pi * (T - t)) ** (-S.n / 2) * np.exp(-S.radius**2 / (4 * (T - t)))
        gu = surface_gradient(S, U[i])
        ggu = surface_gradient(S, gu)
        dudt = 0.0
        if 0 < i < len(times) - 1:
            dudt = material_derivative(trace, U, i, layer)
        dens = U[i] ** 2 + np.asarray(dudt) ** 2 + gu**2 + ggu**2
        integrals.append(float(np.sum((dens * phi * S.weight)[m])))
        if m.any():
            floor.append(float(np.min(U[i][m]) - c0 * np.exp(M1 * (t - t_start))))
        else:
            floor.append(np.inf)
    pde = np.inf
    for i in range(1, len(times) - 1):
        S = trace.surfaces[i]
        m = masks[i] & _boundary_layer(S, layer, axis_layer)
        if not m.any():
            continue
        terms = (material_derivative(trace, U, i, layer), -laplacian(S, U[i]),
                 -A_[i] * surface_gradient(S, U[i]), -B_[i] * U[i])
        scale = sum(np.abs(v) for v in terms)
        rel = sum(terms) / np.where(scale > 0, scale, 1.0)
        pde = min(pde, float(np.min(rel[m])))
    return MaxPrincipleReport(np.asarray(times), np.asarray(floor), M0, M1, pde,
                              np.asarray(integrals), tol, pde_tol)


def smc_barrier_coefficients(trace, X0, alpha, t_start=-1.0):
    """``u = S eta^alpha`` with drift ``a = -2 alpha grad log eta`` and ``b = |A|^2 + alpha(alpha+1)|grad log eta|^2``."""
    U, A_, B_ = [], [], []
    for t, S in zip(trace.times, trace.surfaces):
        eta = 1.0 + S.radius**2 + 2 * S.n * (t - t_start)
        xt = np.einsum("ij,ij->i", S.pos, S.tangent)
        glog = 2 * xt / eta
        U.append(smc(S, X0, t).values * eta**alpha)
        A_.append(-2 * alpha * glog)
        B_.append(S.A2 + alpha * (alpha + 1) * glog**2)
    return U, A_, B_
