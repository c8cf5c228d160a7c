"""Pure numpy/scipy implementations of the hot loops.

These mirror the compiled versions in ``_kernels.pyx`` one for one and are
used whenever the extension is unavailable (or ``SHRINKERKIT_PURE_PYTHON=1``).
"""
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

END_CLAMPED = 0
END_AXIS = 1


def tridiag_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system.

    ``lower[0]`` and ``upper[-1]`` are ignored. ``rhs`` may be 1-D or 2-D
    (one column per right-hand side).
    """
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def cyclic_tridiag_solve(lower, diag, upper, rhs):
    """Solve a periodic tridiagonal system via Sherman-Morrison.

    ``lower[0]`` couples row 0 to the last unknown and ``upper[-1]`` couples
    the last row to unknown 0.
    """
    n = diag.shape[0]
    alpha = upper[-1]
    beta = lower[0]
    gamma = -diag[0]
    d = diag.copy()
    d[0] -= gamma
    d[-1] -= alpha * beta / gamma
    lo = lower.copy()
    up = upper.copy()
    lo[0] = 0.0
    up[-1] = 0.0
    x = tridiag_solve(lo, d, up, rhs)
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = alpha
    z = tridiag_solve(lo, d, up, u)
    fact = (x[0] + beta * x[-1] / gamma) / (1.0 + z[0] + beta * z[-1] / gamma)
    if x.ndim == 2:
        return x - np.outer(z, fact)
    return x - fact * z


def curve_step(x, y, dt, end_a, end_b, rotational, periodic):
    """One linearly implicit step of (rotational) curve-shortening flow.

    The curvature vector is treated implicitly with coefficients frozen at
    the current chord lengths; the rotational term ``-(n.e_r / r) n`` of a
    surface of revolution is explicit. Axis ends keep ``r = 0`` and move with
    twice the profile curvature (umbilic pole); clamped ends do not move.
    """
    n = x.shape[0]
    P = np.column_stack((x, y))
    if periodic:
        d_next = np.roll(P, -1, axis=0) - P
        l_next = np.hypot(d_next[:, 0], d_next[:, 1])
        l_prev = np.roll(l_next, 1)
    else:
        d = np.diff(P, axis=0)
        l = np.hypot(d[:, 0], d[:, 1])
        l_next = np.empty(n)
        l_prev = np.empty(n)
        l_next[:-1] = l
        l_prev[1:] = l
        l_next[-1] = l[-1]
        l_prev[0] = l[0]
    half = 0.5 * (l_prev + l_next)
    cm = 1.0 / (l_prev * half)
    cp = 1.0 / (l_next * half)

    lower = -dt * cm
    upper = -dt * cp
    diag = 1.0 + dt * (cm + cp)
    rhs = P.copy()

    if rotational:
        if periodic:
            tan = np.roll(P, -1, axis=0) - np.roll(P, 1, axis=0)
        else:
            tan = np.empty_like(P)
            tan[1:-1] = P[2:] - P[:-2]
            tan[0] = P[1] - P[0]
            tan[-1] = P[-1] - P[-2]
        tn = np.hypot(tan[:, 0], tan[:, 1])
        tx = tan[:, 0] / tn
        ty = tan[:, 1] / tn
        with np.errstate(divide="ignore", invalid="ignore"):
            k2 = tx / y
        k2 = np.where(y > 0.0, k2, 0.0)
        rhs[:, 0] += dt * k2 * ty
        rhs[:, 1] -= dt * k2 * tx

    if not periodic:
        lx, dx_, ux = lower.copy(), diag.copy(), upper.copy()
        lr, dr_, ur = lower, diag, upper
        bx = rhs[:, 0].copy()
        br = rhs[:, 1].copy()
        for idx, code in ((0, end_a), (n - 1, end_b)):
            for lo, di, up in ((lx, dx_, ux), (lr, dr_, ur)):
                lo[idx] = 0.0
                up[idx] = 0.0
                di[idx] = 1.0
            br[idx] = 0.0 if code == END_AXIS else P[idx, 1]
            bx[idx] = P[idx, 0]
            if code == END_AXIS:
                # mirror ghost across the axis, doubled for the umbilic pole
                c = 4.0 / (l_next[idx] if idx == 0 else l_prev[idx]) ** 2
                dx_[idx] = 1.0 + dt * c
                if idx == 0:
                    ux[idx] = -dt * c
                else:
                    lx[idx] = -dt * c
        return tridiag_solve(lx, dx_, ux, bx), tridiag_solve(lr, dr_, ur, br)

    out = cyclic_tridiag_solve(lower, diag, upper, rhs)
    return out[:, 0].copy(), out[:, 1].copy()


def spline_eval(knots, values, query, periodic):
    """Evaluate the cubic spline through ``(knots, values)`` at ``query``.

    Natural end conditions unless ``periodic``; ``values`` is (N, d).
    """
    bc = "periodic" if periodic else "natural"
    return CubicSpline(knots, values, axis=0, bc_type=bc)(query)


def polyline_distance(A, B):
    """Minimum distance between the segment sets of two open polylines.

    Exact for non-intersecting polylines in the plane: the minimum over
    segment pairs is attained at an endpoint of one of the two segments.
    """
    return min(_points_to_segments(A, B), _points_to_segments(B, A))


def _points_to_segments(P, Q, chunk=512):
    a = Q[:-1]
    ab = Q[1:] - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    ab2 = np.where(ab2 > 0.0, ab2, 1.0)
    best = np.inf
    for start in range(0, P.shape[0], chunk):
        p = P[start:start + chunk, None, :]
        ap = p - a[None, :, :]
        t = np.clip(np.einsum("ijk,jk->ij", ap, ab) / ab2, 0.0, 1.0)
        d = ap - t[..., None] * ab[None, :, :]
        best = min(best, float(np.sqrt(np.min(np.einsum("ijk,ijk->ij", d, d)))))
    return best
