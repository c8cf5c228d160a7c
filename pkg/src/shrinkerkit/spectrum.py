"""Weighted stability operator, its ground state, and the perturbation Gamma^eps.

The operator ``L f = Delta f - (x/2).grad f + |A|^2 f + f/2`` is
self-adjoint for the Gaussian weight ``exp(-|x|^2/4)``. On rotationally
invariant functions its quadratic form is one-dimensional along the
profile, and a finite-volume discretization gives a symmetric tridiagonal
pencil ``(K - V) f = mu M f`` whose lowest eigenpair is ``(mu, f)`` with
``L f = -mu f``.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal, solve_banded

from . import entropy as ent
from .geometry import (
    distance_to_cone, geometric_data, normal_graph, restrict, self_intersections,
    shrinker_residual, surface_gradient,
)


class SolverFailure(RuntimeError):
    """The eigensolver returned a vector that violates the Perron property."""


class NotAShrinker(ValueError):
    """The surface fails the self-shrinker residual check."""


class InvalidPerturbation(ValueError):
    """The requested amplitude exceeds the validity bound."""

    def __init__(self, msg, max_eps):
        super().__init__(msg)
        self.max_eps = max_eps


def gaussian_density(S):
    """``omega`` per node: ``2 pi r exp(-|x|^2/4)`` (n=2) or ``exp(-|x|^2/4)`` (n=1)."""
    g = np.exp(-S.radius**2 / 4)
    return 2 * np.pi * S.pos[:, 1] * g if S.n == 2 else g


def _core(S, R):
    """Largest contiguous run of nodes inside ``B_R`` through the node nearest the origin."""
    inside = S.radius < R
    k = int(np.argmin(S.radius))
    if not inside[k]:
        raise ValueError("no node inside the truncation ball")
    if S.closed and inside.all():
        return np.arange(S.size)
    lo = k
    while lo > 0 and inside[lo - 1]:
        lo -= 1
    hi = k
    while hi < S.size - 1 and inside[hi + 1]:
        hi += 1
    return np.arange(lo, hi + 1)


@dataclass
class Pencil:
    """Symmetric tridiagonal pencil ``(K - V) f = mu M f`` on the core nodes.

    ``off`` is the off-diagonal of ``K - V`` (``off[i]`` couples ``i`` and
    ``i+1``); ``wrap`` couples the last and first node of closed curves.
    """

    index: np.ndarray
    diag: np.ndarray
    off: np.ndarray
    mass: np.ndarray
    R: float
    wrap: float = 0.0
    clipped: bool = False
    cond: np.ndarray = None
    pot: np.ndarray = None
    cut: tuple = (0.0, 0.0)

    @property
    def periodic(self):
        return self.wrap != 0.0

    def scaled(self):
        """Diagonal and off-diagonal of ``M^-1/2 (K - V) M^-1/2``."""
        s = 1.0 / np.sqrt(self.mass)
        return self.diag * s * s, self.off * s[:-1] * s[1:]

    def dense(self):
        d, e = self.scaled()
        B = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
        if self.periodic:
            s = 1.0 / np.sqrt(self.mass)
            B[0, -1] = B[-1, 0] = self.wrap * s[0] * s[-1]
        return B

    def quotient(self, f):
        """Weighted Rayleigh quotient of a core vector.

        Summed as edge energies minus potential energy, which avoids the
        cancellation of the assembled rows.
        """
        if self.cond is None:
            num = np.dot(f, self.diag * f) + 2 * np.dot(self.off, f[:-1] * f[1:])
            if self.periodic:
                num += 2 * self.wrap * f[0] * f[-1]
        else:
            df = np.diff(np.r_[f, f[0]]) if self.periodic else np.diff(f)
            num = (np.dot(self.cond, df * df) + self.cut[0] * f[0] ** 2 + self.cut[1] * f[-1] ** 2
                   - np.dot(self.pot * self.mass, f * f))
        return num / np.dot(f, self.mass * f)


def assemble_operator(S, R=np.inf):
    """Finite-volume pencil of ``-L`` with Dirichlet data outside ``B_R``.

    Edge conductances are the density ``omega`` at segment midpoints over
    the segment length; node masses are ``omega`` times half the adjacent
    segment lengths, with the exact cell ``pi (l/2)^2 exp(-|x|^2/4)`` at
    on-axis nodes (Neumann by symmetry).

    Parameters
    ----------
    S : SurfaceSampleSet
    R : float
        Truncation radius. Values beyond the sampled extent are clipped
        with a warning.
    """
    extent = float(S.radius.max())
    clipped = False
    if R > extent and not S.compact:
        warnings.warn(f"truncation radius {R:g} exceeds surface extent {extent:.4g}; clipped",
                      stacklevel=2)
        clipped = True
    idx = _core(S, R)
    P = S.pos
    closed = S.closed and idx.size == S.size
    if closed:
        Q = np.vstack((P, P[:1]))
    else:
        Q = P[idx[0]:idx[-1] + 1]
    seg = np.diff(Q, axis=0)
    l = np.hypot(seg[:, 0], seg[:, 1])
    mid = 0.5 * (Q[:-1] + Q[1:])
    gm = np.exp(-np.sum(mid**2, axis=1) / 4)
    cond = (2 * np.pi * mid[:, 1] * gm if S.n == 2 else gm) / l
    omega = gaussian_density(S)[idx]
    m = idx.size
    mass = np.empty(m)
    if closed:
        lp = np.roll(l, 1)
        mass = omega * 0.5 * (l + lp)
        diag = cond + np.roll(cond, 1)
        off = -cond[:-1]
        wrap = -cond[-1]
    else:
        mass[1:-1] = omega[1:-1] * 0.5 * (l[:-1] + l[1:])
        mass[0] = omega[0] * 0.5 * l[0]
        mass[-1] = omega[-1] * 0.5 * l[-1]
        diag = np.zeros(m)
        diag[:-1] += cond
        diag[1:] += cond
        off = -cond
        wrap = 0.0
        axis_a, axis_b = S.curve.axis_ends if S.n == 2 else (False, False)
        g = np.exp(-S.radius[idx] ** 2 / 4)
        if idx[0] == 0 and axis_a:
            mass[0] = np.pi * (0.5 * l[0]) ** 2 * g[0]
        if idx[-1] == S.size - 1 and axis_b:
            mass[-1] = np.pi * (0.5 * l[-1]) ** 2 * g[-1]
        # Dirichlet neighbours just outside the core; the cut node keeps its
        # full cell so nested cores are exact subspace restrictions
        cut = [0.0, 0.0]
        for k, (end, nb) in enumerate(((0, idx[0] - 1), (m - 1, idx[-1] + 1))):
            if 0 <= nb < S.size:
                a, b = P[nb], P[idx[end]]
                ln = float(np.hypot(*(a - b)))
                c = 0.5 * (a + b)
                gc = np.exp(-np.dot(c, c) / 4)
                cut[k] = (2 * np.pi * c[1] * gc if S.n == 2 else gc) / ln
                diag[end] += cut[k]
                mass[end] += omega[end] * 0.5 * ln
    pot = S.A2[idx] + 0.5
    diag = diag - pot * mass
    if closed:
        return Pencil(idx, diag, off, mass, float(R), wrap, clipped, cond, pot)
    return Pencil(idx, diag, off, mass, float(R), wrap, clipped, cond, pot, tuple(cut))


def _row_scaled(pencil):
    """Sub-, main and super-diagonal of ``M^-1 (K - V)``.

    Row scaling keeps every row O(1/h^2) even where the Gaussian weight
    underflows, so far-field values of ``f`` keep their relative accuracy.
    """
    m = pencil.mass
    return pencil.off / m[1:], pencil.diag / m, pencil.off / m[:-1]


def _gershgorin_floor(pencil):
    lo, d, up = _row_scaled(pencil)
    rad = np.abs(np.r_[up, 0.0]) + np.abs(np.r_[0.0, lo])
    if pencil.periodic:
        rad[0] += abs(pencil.wrap) / pencil.mass[0]
        rad[-1] += abs(pencil.wrap) / pencil.mass[-1]
    return float(np.min(d - rad))


def _shifted_solver(pencil):
    lo, d, up = _row_scaled(pencil)
    if pencil.periodic:
        B = np.diag(d) + np.diag(up, 1) + np.diag(lo, -1)
        B[0, -1] = pencil.wrap / pencil.mass[0]
        B[-1, 0] = pencil.wrap / pencil.mass[-1]
        eye = np.eye(d.size)
        return lambda v, sigma: np.linalg.solve(B - sigma * eye, v)

    def solve(v, sigma):
        ab = np.zeros((3, d.size))
        ab[0, 1:] = up
        ab[1] = d - sigma
        ab[2, :-1] = lo
        return solve_banded((1, 1), ab, v, check_finite=False)
    return solve


def _inverse_iteration(pencil, v0=None, tol=1e-14, maxiter=2000):
    """Shifted inverse iteration on ``M^-1 (K - V)``, then Rayleigh polishing.

    The shift sits one unit below the Gershgorin bound, so the iteration
    converges to the lowest eigenpair.
    """
    m = pencil.mass
    sigma = _gershgorin_floor(pencil) - 1.0
    solve = _shifted_solver(pencil)
    v = np.ones(m.size) if v0 is None else np.asarray(v0, dtype=float).copy()

    def unit(w):
        return w / np.sqrt(np.sum(m * w * w))

    v = unit(v)
    mu = np.inf
    for it in range(maxiter):
        v = unit(solve(v, sigma))
        mu_new = pencil.quotient(v)
        done = abs(mu_new - mu) <= tol * max(1.0, abs(mu_new))
        mu = mu_new
        if done:
            break
    # Rayleigh polishing with a shift just below the estimate
    for _ in range(3):
        v = unit(solve(v, mu - 1e-9 * max(1.0, abs(mu))))
        mu = pencil.quotient(v)
    return mu, v, it + 1


# ---------------------------------------------------------------------------
# lowest eigenpair


R_SCHEDULE = (10.0, 15.0, 20.0, 30.0)


@dataclass
class DecayFit:
    """Least-squares slope of ``log f`` against ``log |x|`` on an outer window.

    ``band`` is the 95% half-width of the slope; ``bracket`` is the
    admissible interval ``[1 + 2 mu - 2 beta, 1 + 2 mu + 2 beta]``.
    """

    slope: float
    band: float
    window: tuple
    bracket: tuple
    applicable: bool

    @property
    def within(self):
        if not self.applicable:
            return True
        return bool(self.bracket[0] <= self.slope <= self.bracket[1])


@dataclass
class SpectralResult:
    """Lowest eigenpair of the stability operator on rotationally invariant functions.

    ``f`` is a node field on ``surface`` normalized by the discrete weighted
    mass; it vanishes outside the Dirichlet core of the largest radius.
    """

    mu: float
    f: np.ndarray
    R: float
    mu_by_R: list
    decay_fit: DecayFit
    C0: float
    C1: float
    beta: float
    surface: object = field(repr=False, default=None)
    core: np.ndarray = field(repr=False, default=None)
    rayleigh_gap: float = 0.0
    uniqueness_gap: float = 0.0
    angular_gap: float = float("nan")
    normalization: float = 1.0

    @property
    def monotone(self):
        mus = [m for _, m in self.mu_by_R]
        return all(b <= a for a, b in zip(mus, mus[1:]))

    def truncated(self, R):
        """``(surface, f)`` restricted to the contiguous core of ``B_R``."""
        idx = _core(self.surface, R)
        idx = idx[np.isin(idx, self.core)]
        return restrict(self.surface, idx), self.f[idx].copy()


def _extrapolate(mus):
    """Aitken limit of the last three terms when they contract, else the last term."""
    if len(mus) < 3:
        return mus[-1]
    a, b, c = mus[-3:]
    d1, d2 = b - a, c - b
    if d1 == 0 or d2 == 0 or not (0 < d2 / d1 < 1):
        return c
    return c - d2 * d2 / (d2 - d1)


def _beta(mu):
    return 0.5 * min(1.0, max(-mu - 1.0, 0.0))


def _has_conical_end(S):
    if S.compact or S.n != 2:
        return False
    ends = [e for e, ax in zip((S.curve.end_a, S.curve.end_b), S.curve.axis_ends) if not ax]
    return any(1e-9 < e.angle < np.pi - 1e-9 for e in ends)


def _decay_fit(S, f, core, R, mu, beta, window=(0.35, 0.7)):
    rad = S.radius[core]
    sel = (rad >= window[0] * R) & (rad <= window[1] * R) & (f[core] > 0)
    lo, hi = 1 + 2 * mu - 2 * beta, 1 + 2 * mu + 2 * beta
    if not _has_conical_end(S) or mu >= -1 or sel.sum() < 8:
        return DecayFit(float("nan"), float("nan"), window, (lo, hi), False)
    X = np.log(rad[sel])
    Y = np.log(f[core][sel])
    A = np.column_stack((X, np.ones_like(X)))
    coef, res, *_ = np.linalg.lstsq(A, Y, rcond=None)
    dof = max(X.size - 2, 1)
    s2 = float(np.sum((Y - A @ coef) ** 2)) / dof
    se = np.sqrt(s2 / np.sum((X - X.mean()) ** 2))
    return DecayFit(float(coef[0]), float(1.96 * se), window, (lo, hi), True)


def _envelopes(S, f, core, R, mu, beta, layer=0.8):
    """Measured ``C0`` (two-sided bound on ``f``) and ``C1`` (bound on ``|grad f|``)."""
    keep = core[S.radius[core] <= layer * R] if np.isfinite(R) and not S.compact else core
    q = 1 + S.radius[keep] ** 2
    fk = f[keep]
    C0 = max(float(np.max(fk / q ** (0.5 + mu + beta))),
             float(np.max(q ** (0.5 + mu - beta) / fk)))
    full = np.zeros(S.size)
    full[core] = f[core]
    g = np.abs(surface_gradient(S, full))[keep]
    # stencils at a Dirichlet cut see the zero extension
    cut = [k for k in (core[0], core[-1]) if k not in (0, S.size - 1)]
    inner = ~np.isin(keep, cut)
    C1 = float(np.max(g[inner] / q[inner] ** (mu + beta)))
    return C0, C1


def angular_mode_gap(S, pencil, k=1):
    """``mu_k - mu_0`` for the ``k``-th azimuthal mode on the same core.

    The ``k``-th mode adds the potential ``k^2 / r^2`` and vanishes on the
    axis, so the gap is non-negative; a positive value confirms that the
    ground state is rotationally invariant.
    """
    if S.n != 2:
        return float("nan")
    r = S.pos[pencil.index, 1]
    on = r > 0
    extra = np.zeros_like(r)
    extra[on] = k * k / r[on] ** 2
    diag = pencil.diag + extra * pencil.mass
    keep = np.flatnonzero(on)
    sub = Pencil(pencil.index[keep], diag[keep], pencil.off[keep[:-1]], pencil.mass[keep],
                 pencil.R)
    d, e = sub.scaled()
    mu_k = eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, 0))[0]
    d0, e0 = pencil.scaled()
    mu_0 = eigh_tridiagonal(d0, e0, eigvals_only=True, select="i", select_range=(0, 0))[0]
    return float(mu_k - mu_0)


def _solve(pencil, v0=None):
    mu, f, _ = _inverse_iteration(pencil, v0)
    f = f * np.sign(np.sum(pencil.mass * f))
    f /= np.sqrt(np.sum(pencil.mass * f * f))
    return mu, f


def lowest_eigenpair(S, R_schedule=R_SCHEDULE, seed=0):
    """Lowest eigenpair ``(mu, f)`` with ``L f = -mu f`` over nested truncations.

    Parameters
    ----------
    S : SurfaceSampleSet
    R_schedule : sequence of float
        Increasing truncation radii; the eigenfunction is taken at the last.
    seed : int
        Seed of the second, random starting vector of the uniqueness check.

    Returns
    -------
    SpectralResult

    Raises
    ------
    SolverFailure
        If the sign-normalized eigenvector is not positive on its core.
    """
    schedule = sorted(float(R) for R in R_schedule)
    mu_by_R = []
    pencil = None
    prev = None
    with warnings.catch_warnings():
        if S.compact:
            warnings.simplefilter("ignore")
        for R in schedule:
            pencil = assemble_operator(S, R)
            mu_R, f_R = _solve(pencil)
            if prev is not None:
                # the previous ground state extended by zero is a trial vector
                trial = np.zeros(pencil.index.size)
                trial[np.isin(pencil.index, prev[0])] = prev[1]
                mu_w, f_w = _solve(pencil, trial)
                if mu_w < mu_R:
                    mu_R, f_R = mu_w, f_w
                mu_R = min(mu_R, pencil.quotient(trial))
            prev = (pencil.index, f_R)
            mu_by_R.append((R, float(mu_R)))
    core = pencil.index
    if np.any(f_R <= 0):
        raise SolverFailure(f"eigenvector changes sign at {int(np.sum(f_R <= 0))} nodes")
    # independent checks on the final pencil
    if pencil.periodic:
        w, V = eigh(pencil.dense(), subset_by_index=[0, 0])
        exact = float(w[0])
    else:
        d, e = pencil.scaled()
        exact = float(eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, 0))[0])
    rng = np.random.default_rng(seed)
    _, f_alt = _solve(pencil, rng.uniform(0.5, 1.5, core.size))
    uniq = float(np.max(np.abs(f_alt - f_R)) / np.max(np.abs(f_R)))
    mu = float(_extrapolate([m for _, m in mu_by_R]))
    beta = _beta(mu)
    f = np.zeros(S.size)
    f[core] = f_R
    R = schedule[-1]
    fit = _decay_fit(S, f, core, R, mu, beta)
    C0, C1 = _envelopes(S, f, core, R, mu, beta)
    return SpectralResult(
        mu=mu, f=f, R=R, mu_by_R=mu_by_R, decay_fit=fit, C0=C0, C1=C1, beta=beta,
        surface=S, core=core, rayleigh_gap=abs(mu_by_R[-1][1] - exact),
        uniqueness_gap=uniq, angular_gap=angular_mode_gap(S, pencil),
        normalization=float(np.sum(pencil.mass * f_R**2)),
    )


# ---------------------------------------------------------------------------
# weighted Poincare inequality


@dataclass
class PoincareReport:
    worst: float
    ratios: np.ndarray
    passed: bool


def _bumps(s, centers, widths, coeffs):
    """Sum of ``c (1 - u^2)^3`` bumps in arclength and its analytic derivative."""
    u = (s[:, None] - centers[None, :]) / widths[None, :]
    inside = np.abs(u) < 1
    q = np.where(inside, 1 - u * u, 0.0)
    phi = (q**3) @ coeffs
    dphi = (3 * q**2 * (-2 * u) / widths[None, :] * inside) @ coeffs
    return phi, dphi


def poincare_ratio(S, phi, dphi):
    """``int phi^2 |x|^2 w / (16 int |grad phi|^2 w + 4 n int phi^2 w)``."""
    w = S.weight * np.exp(-S.radius**2 / 4)
    lhs = np.sum(phi**2 * S.radius**2 * w)
    rhs = 16 * np.sum(dphi**2 * w) + 4 * S.n * np.sum(phi**2 * w)
    return float(lhs / rhs)


def weighted_poincare_test(S, trials=1000, seed=0, max_bumps=4, tol=1e-4, centers=None,
                           widths=None):
    """Worst ratio of the weighted Poincare inequality over random bump combinations.

    Each trial draws up to ``max_bumps`` bumps ``(1 - u^2)^3`` in arclength,
    with random signed amplitudes, supported strictly inside the sampled
    profile. Passing means every ratio is at most ``1 + 1e-3``.

    Parameters
    ----------
    S : SurfaceSampleSet
        Must satisfy the shrinker equation to within ``tol``.
    centers, widths : sequence of float, optional
        A single deterministic bump combination (arclength center and
        half-width, unit amplitudes) instead of random trials.

    Raises
    ------
    NotAShrinker
    """
    _, res = shrinker_residual(S)
    if res > tol:
        raise NotAShrinker(f"shrinker residual {res:.3g} exceeds {tol:g}")
    s = S.arclength
    L = s[-1]
    if centers is not None:
        c = np.atleast_1d(np.asarray(centers, dtype=float))
        wd = np.atleast_1d(np.asarray(widths, dtype=float))
        phi, dphi = _bumps(s, c, wd, np.ones(c.size))
        r = poincare_ratio(S, phi, dphi)
        return PoincareReport(r, np.array([r]), r <= 1 + 1e-3)
    rng = np.random.default_rng(seed)
    h = S.h
    ratios = np.empty(trials)
    for k in range(trials):
        m = int(rng.integers(1, max_bumps + 1))
        wd = rng.uniform(10 * h, max(0.25 * L, 20 * h), m)
        wd = np.minimum(wd, 0.45 * L)
        # closed curves have no boundary; open ones keep supports inside
        lo, hi = (0.0, L) if S.closed else (wd, L - wd)
        c = rng.uniform(lo, hi)
        coeff = rng.normal(size=m)
        phi, dphi = _bumps(s, c, wd, coeff)
        if not np.any(phi):
            phi, dphi = _bumps(s, c, wd, np.ones(m))
        ratios[k] = poincare_ratio(S, phi, dphi)
    worst = float(ratios.max())
    return PoincareReport(worst, ratios, worst <= 1 + 1e-3)


# ---------------------------------------------------------------------------
# the perturbation Gamma^eps


TUBE_R_GRID = (1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass
class PerturbationChecks:
    graph: bool
    tube: bool
    local_graph: bool
    smc_floor: bool
    details: dict = field(default_factory=dict)

    @property
    def all(self):
        return self.graph and self.tube and self.local_graph and self.smc_floor


@dataclass
class PerturbationSpec:
    """The normal graph ``Gamma^eps = {x + eps f n}`` with its validity checks.

    ``surface`` carries the normal for which the shrinker mean curvature
    about the space-time origin at ``t = -1`` is non-negative; ``smc_floor``
    is the measured ``min S (1 + |x|^2)^(-mu)`` and ``floor_bound`` the
    target ``-mu |eps| / C0``.
    """

    epsilon: float
    surface: object
    validity: bool
    smc_floor: float
    floor_bound: float
    checks: PerturbationChecks
    smc: np.ndarray = field(repr=False, default=None)
    K: float = float("nan")


def tubular_radius(S):
    """Focal radius ``1 / max |A|`` of the sample set."""
    a = float(np.max(S.A))
    return np.inf if a == 0 else 1.0 / a


def _fit_K(S, cone, grid):
    """Smallest ``K`` with ``S \\ B_{K R}`` inside the ``1/R`` tube of the cone for all ``R``."""
    d = distance_to_cone(S.pos, cone)
    rad = S.radius
    K = 1.0
    for R in grid:
        bad = d > 1.0 / R
        if np.any(bad):
            K = max(K, float(rad[bad].max()) / R)
    return K


def _tube_check(G, cone, K, grid):
    d = distance_to_cone(G.pos, cone)
    worst = -np.inf
    for R in grid:
        far = G.radius > K * R
        if np.any(far):
            worst = max(worst, float(np.max(d[far] - 1.0 / R)))
    return worst <= 0, worst


def _local_graph_check(S, G, kappa, delta, r_min, stride):
    """Worst slope of ``G`` over tangent planes of ``S`` in balls of radius ``kappa |x|``.

    For a surface of revolution the node ``q`` at azimuth ``th`` has normal
    ``(n_x, n_r cos th, n_r sin th)``; the ball constraint bounds ``|th|``,
    which gives the extreme normal angle in closed form.
    """
    worst = 0.0
    connected = True
    cand = np.flatnonzero(S.radius > r_min)[::max(stride, 1)]
    P, N = S.pos, S.normal
    Q, M = G.pos, G.normal
    for i in cand:
        rho = kappa * S.radius[i]
        dx = Q[:, 0] - P[i, 0]
        r1, r2 = P[i, 1], Q[:, 1]
        near = dx**2 + (r1 - r2) ** 2 < rho * rho
        idx = np.flatnonzero(near)
        if idx.size == 0:
            continue
        if np.any(np.diff(idx) != 1):
            connected = False
        if S.n == 2 and r1 > 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                cth = (dx[idx] ** 2 + r1**2 + r2[idx] ** 2 - rho * rho) / (2 * r1 * r2[idx])
            cth = np.clip(np.nan_to_num(cth, nan=-1.0), -1.0, 1.0)
            # the normal product is affine in cos(th); extremes at th = 0 and |th| max
            a = N[i, 0] * M[idx, 0]
            b = N[i, 1] * M[idx, 1]
            d0, d1 = a + b, a + b * cth
            if np.any(d0 * d1 <= 0):
                return np.inf, False
            dot = np.minimum(np.abs(d0), np.abs(d1))
        else:
            dot = np.abs(M[idx] @ N[i])
            if np.any(dot == 0):
                return np.inf, False
        slope = np.sqrt(np.clip(1 - dot * dot, 0, None)) / dot
        worst = max(worst, float(slope.max()))
    return worst, connected


def smc_origin(G):
    """``2H - x.n``: shrinker mean curvature about ``(0, 0)`` at ``t = -1``."""
    return 2 * G.H - G.x_dot_n


def _boundary_mask(S, layer):
    keep = np.ones(S.size, dtype=bool)
    for k, _ in S.truncated_ends():
        if k == 0:
            keep[:layer] = False
        else:
            keep[-layer:] = False
    return keep


def build_perturbation(S, f, eps, mu=None, C0=None, cone=None, kappa=0.1, delta=0.25,
                       r_local=5.0, R_grid=TUBE_R_GRID, K=None, layer=5, stride=25):
    """The normal graph ``Gamma^eps`` over ``S`` and its four validity checks.

    Parameters
    ----------
    S : SurfaceSampleSet
        The shrinker.
    f : array or SpectralResult
        Eigenfunction on the nodes of ``S``. A :class:`SpectralResult`
        also supplies ``mu`` and ``C0``.
    eps : float
        Signed amplitude.
    cone : Cone, optional
        Asymptotic cone; fitted from ``S`` when omitted for non-compact ``S``.
    K : float, optional
        Tube constant; by default twice the smallest ``K`` that works for ``S``.
    layer : int
        Nodes next to truncated ends excluded from the floor (one-sided
        stencils there are first order).

    Raises
    ------
    InvalidPerturbation
        If ``|eps| max f`` reaches the focal radius ``1 / max |A|``.
    """
    if isinstance(f, SpectralResult):
        mu = f.mu if mu is None else mu
        C0 = f.C0 if C0 is None else C0
        f = f.f
    f = np.asarray(f, dtype=float)
    if f.shape != (S.size,):
        raise ValueError("f must be a node field on S")
    eps = float(eps)
    fmax = float(np.max(np.abs(f)))
    rho = tubular_radius(S)
    if abs(eps) * fmax >= rho:
        raise InvalidPerturbation(
            f"|eps| max f = {abs(eps) * fmax:.4g} reaches the focal radius {rho:.4g}",
            rho / fmax)
    orient = S.curve.orientation * (-1 if eps > 0 else 1)
    G = geometric_data(normal_graph(S, eps * f, orientation=orient))
    # (a) regular normal graph: inside the focal radius and no new crossings
    n0 = len(self_intersections(S.pos, S.closed))
    n1 = len(self_intersections(G.pos, G.closed))
    graph_ok = n1 == n0
    # (b) tube condition and (c) local graphs, only for non-compact S
    if S.compact:
        tube_ok, tube_worst, Kfit = True, -np.inf, float("nan")
        slope, connected = 0.0, True
    else:
        if cone is None:
            from .shrinkers import asymptotic_cone
            cone = asymptotic_cone(S).cone
        Kfit = 2 * _fit_K(S, cone, R_grid) if K is None else float(K)
        tube_ok, tube_worst = _tube_check(G, cone, Kfit, R_grid)
        slope, connected = _local_graph_check(S, G, kappa, delta, r_local, stride)
    local_ok = connected and slope <= delta
    # (d) shrinker mean curvature floor
    smc = smc_origin(G)
    keep = _boundary_mask(S, layer)
    if mu is None:
        floor, bound, floor_ok = float("nan"), float("nan"), True
    else:
        amp = (1 + G.radius[keep] ** 2) ** (-mu)
        floor = float(np.min(smc[keep] * amp))
        bound = -mu * abs(eps) / C0 if C0 else 0.0
        if eps != 0:
            floor_ok = floor >= bound
        else:
            # degenerate case: S vanishes up to the discrete shrinker residual
            res, _ = shrinker_residual(S)
            floor_ok = abs(floor) <= float(np.max(2 * np.abs(res[keep]) * amp)) + 1e-12
    checks = PerturbationChecks(
        graph_ok, bool(tube_ok), bool(local_ok), bool(floor_ok),
        {"crossings": (n0, n1), "focal_radius": rho, "tube_worst": tube_worst,
         "local_slope": slope, "local_connected": connected, "K": Kfit},
    )
    return PerturbationSpec(eps, G, bool(graph_ok and tube_ok and local_ok), floor, bound,
                            checks, smc, Kfit)


def find_epsilon0(S, spectral, cone=None, halvings=20, **kw):
    """Largest ``eps`` on a halving scan for which both ``Gamma^{+-eps}`` pass every check.

    The scan starts at the focal bound ``1 / (max f max |A|)``.
    """
    f = spectral.f
    a = float(np.max(S.A))
    eps = 1.0 / (np.max(np.abs(f)) * a) if a > 0 else 1.0
    eps *= 1 - 1e-9
    if cone is None and not S.compact:
        from .shrinkers import asymptotic_cone
        cone = asymptotic_cone(S).cone
    for _ in range(halvings):
        try:
            ok = all(build_perturbation(S, spectral, s * eps, cone=cone, **kw).checks.all
                     for s in (1, -1))
        except InvalidPerturbation:
            ok = False
        if ok:
            return eps
        eps *= 0.5
    raise InvalidPerturbation("no admissible amplitude found", 0.0)


# ---------------------------------------------------------------------------
# entropy decrease


@dataclass
class EntropyDecreaseReport:
    """``lambda[Gamma^eps] - lambda[Sigma]`` over an amplitude grid.

    ``status`` is ``"pass"``, ``"fail"``, or ``"inconclusive"`` when an
    entropy optimization only certified a lower bound.
    """

    eps: np.ndarray
    diffs: np.ndarray
    base: float
    quad_coeff: float
    predicted: float
    schur_predicted: float
    status: str
    rel_error: float

    @property
    def strict(self):
        nz = self.eps != 0
        return bool(np.all(self.diffs[nz] < 0))


def eps_grid(eps0, count=4, smallest=1e-3):
    """Symmetric log-spaced grid in ``|eps|`` from ``smallest`` to ``eps0``."""
    mags = np.geomspace(min(smallest, eps0), eps0, count)
    return np.concatenate((-mags[::-1], mags))


def entropy_decrease_check(S, f, grid, budget=4000, seed=0, tol_rel=0.3):
    """Entropy of each ``Gamma^eps`` against that of ``S``.

    The quadratic coefficient of the differences is fitted by least squares
    and compared with half the ``f`` entry of the second variation of ``G``.
    """
    if isinstance(f, SpectralResult):
        f = f.f
    f = np.asarray(f, dtype=float)
    grid = np.asarray(grid, dtype=float)
    base = ent.entropy(S, budget=budget, seed=seed)
    status = "pass"
    if base.status != "converged":
        status = "inconclusive"
    diffs = np.empty(grid.size)
    for k, eps in enumerate(grid):
        if eps == 0:
            diffs[k] = 0.0
            continue
        G = ent.perturbed_surface(S, f, eps)
        e = ent.entropy(G, budget=budget, seed=seed)
        if e.status != "converged":
            status = "inconclusive"
        diffs[k] = e.value - base.value
    hess = ent.hessian_G_at_critical(S, f)
    M = hess.matrix
    predicted = 0.5 * hess.f_entry
    # maximize the quadratic model over (y, a) for fixed b = 1
    Mya = M[:-1, :-1]
    col = M[:-1, -1]
    schur = 0.5 * (M[-1, -1] - col @ np.linalg.solve(Mya, col))
    nz = grid != 0
    quad = float(np.sum(diffs[nz] * grid[nz] ** 2) / np.sum(grid[nz] ** 4)) if np.any(nz) else 0.0
    rel = abs(quad - predicted) / abs(predicted) if predicted else float("inf")
    if status == "pass" and not (np.all(diffs[nz] < 0) and rel <= tol_rel):
        status = "fail"
    return EntropyDecreaseReport(grid, diffs, base.value, quad, predicted, float(schur), status,
                                 float(rel))
