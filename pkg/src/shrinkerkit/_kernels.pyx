# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; see ``_kernels_py`` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, hypot, INFINITY

cnp.import_array()

cdef enum:
    _AXIS = 1
END_CLAMPED = 0
END_AXIS = 1


cdef void _thomas(double[:] a, double[:] b, double[:] c, double[:] d,
                  double[:] x, double[:] cp, double[:] dp) noexcept nogil:
    cdef Py_ssize_t n = b.shape[0], i
    cdef double m
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / m
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]


cdef void _cyclic(double[:] a, double[:] b, double[:] c, double[:] d,
                  double[:] x, double[:] work) noexcept nogil:
    # Sherman-Morrison on top of the Thomas sweep; work has length 6n
    cdef Py_ssize_t n = b.shape[0], i
    cdef double alpha = c[n - 1], beta = a[0], gamma = -b[0], fact
    cdef double[:] bb = work[0:n]
    cdef double[:] u = work[n:2 * n]
    cdef double[:] z = work[2 * n:3 * n]
    cdef double[:] cp = work[3 * n:4 * n]
    cdef double[:] dp = work[4 * n:5 * n]
    cdef double[:] aa = work[5 * n:6 * n]
    for i in range(n):
        bb[i] = b[i]
        aa[i] = a[i]
        u[i] = 0.0
    bb[0] -= gamma
    bb[n - 1] -= alpha * beta / gamma
    aa[0] = 0.0
    u[0] = gamma
    u[n - 1] = alpha
    # c[n-1] is ignored by the sweep, so no copy is needed
    _thomas(aa, bb, c, d, x, cp, dp)
    _thomas(aa, bb, c, u, z, cp, dp)
    fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma)
    for i in range(n):
        x[i] -= fact * z[i]


def tridiag_solve(lower, diag, upper, rhs):
    cdef double[:] a = np.ascontiguousarray(lower, dtype=np.float64)
    cdef double[:] b = np.ascontiguousarray(diag, dtype=np.float64)
    cdef double[:] c = np.ascontiguousarray(upper, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0], j
    cdef double[:] cp = np.empty(n)
    cdef double[:] dp = np.empty(n)
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.ndim == 1:
        out = np.empty(n)
        _thomas(a, b, c, np.ascontiguousarray(rhs), out, cp, dp)
        return out
    out = np.empty_like(rhs)
    for j in range(rhs.shape[1]):
        col = np.empty(n)
        _thomas(a, b, c, np.ascontiguousarray(rhs[:, j]), col, cp, dp)
        out[:, j] = col
    return out


def cyclic_tridiag_solve(lower, diag, upper, rhs):
    cdef double[:] a = np.ascontiguousarray(lower, dtype=np.float64)
    cdef double[:] b = np.ascontiguousarray(diag, dtype=np.float64)
    cdef double[:] c = np.ascontiguousarray(upper, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0], j
    cdef double[:] work = np.empty(6 * n)
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.ndim == 1:
        out = np.empty(n)
        _cyclic(a, b, c, np.ascontiguousarray(rhs), out, work)
        return out
    out = np.empty_like(rhs)
    for j in range(rhs.shape[1]):
        col = np.empty(n)
        _cyclic(a, b, c, np.ascontiguousarray(rhs[:, j]), col, work)
        out[:, j] = col
    return out


def curve_step(x, y, double dt, int end_a, int end_b, bint rotational, bint periodic):
    cdef double[:] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:] Y = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], i, ip, im
    cdef double[:] lx = np.empty(n)
    cdef double[:] dx = np.empty(n)
    cdef double[:] ux = np.empty(n)
    cdef double[:] lr = np.empty(n)
    cdef double[:] dr = np.empty(n)
    cdef double[:] ur = np.empty(n)
    cdef double[:] bx = np.empty(n)
    cdef double[:] br = np.empty(n)
    cdef double[:] lnext = np.empty(n)
    cdef double[:] lprev = np.empty(n)
    cdef double lp, ln, half, cm, cq, tx, ty, tn, k2, cc
    out_x = np.empty(n)
    out_y = np.empty(n)
    cdef double[:] ox = out_x
    cdef double[:] oy = out_y
    cdef double[:] cp = np.empty(n)
    cdef double[:] dp = np.empty(n)
    cdef double[:] work

    with nogil:
        for i in range(n):
            if periodic:
                ip = (i + 1) % n
            elif i == n - 1:
                ip = n - 2
            else:
                ip = i + 1
            lnext[i] = hypot(X[ip] - X[i], Y[ip] - Y[i])
        for i in range(n):
            if periodic:
                lprev[i] = lnext[(i + n - 1) % n]
            elif i == 0:
                lprev[i] = lnext[0]
            else:
                lprev[i] = lnext[i - 1]
        for i in range(n):
            lp = lprev[i]
            ln = lnext[i]
            half = 0.5 * (lp + ln)
            cm = 1.0 / (lp * half)
            cq = 1.0 / (ln * half)
            lx[i] = -dt * cm
            ux[i] = -dt * cq
            dx[i] = 1.0 + dt * (cm + cq)
            lr[i] = lx[i]
            ur[i] = ux[i]
            dr[i] = dx[i]
            bx[i] = X[i]
            br[i] = Y[i]
            if rotational and Y[i] > 0.0:
                if periodic:
                    ip = (i + 1) % n
                    im = (i + n - 1) % n
                else:
                    ip = i + 1 if i < n - 1 else i
                    im = i - 1 if i > 0 else i
                tx = X[ip] - X[im]
                ty = Y[ip] - Y[im]
                tn = hypot(tx, ty)
                tx /= tn
                ty /= tn
                k2 = tx / Y[i]
                bx[i] += dt * k2 * ty
                br[i] -= dt * k2 * tx

    if periodic:
        work = np.empty(6 * n)
        _cyclic(lx, dx, ux, bx, ox, work)
        _cyclic(lr, dr, ur, br, oy, work)
        return out_x, out_y

    with nogil:
        for ip in range(2):
            i = 0 if ip == 0 else n - 1
            lx[i] = 0.0
            ux[i] = 0.0
            dx[i] = 1.0
            lr[i] = 0.0
            ur[i] = 0.0
            dr[i] = 1.0
            bx[i] = X[i]
            br[i] = Y[i]
        if end_a == _AXIS:
            br[0] = 0.0
            cc = 4.0 / (lnext[0] * lnext[0])
            dx[0] = 1.0 + dt * cc
            ux[0] = -dt * cc
        if end_b == _AXIS:
            br[n - 1] = 0.0
            cc = 4.0 / (lprev[n - 1] * lprev[n - 1])
            dx[n - 1] = 1.0 + dt * cc
            lx[n - 1] = -dt * cc
        _thomas(lx, dx, ux, bx, ox, cp, dp)
        _thomas(lr, dr, ur, br, oy, cp, dp)
    return out_x, out_y


cdef void _spline_moments(double[:] t, double[:] y, double[:] M, bint periodic,
                          double[:] work) noexcept nogil:
    cdef Py_ssize_t n = t.shape[0], i, m
    cdef double h0, h1
    cdef double[:] a, b, c, d, cp, dp, x
    if periodic:
        # unknowns M_0..M_{n-2}, M_{n-1} = M_0
        m = n - 1
        a = work[0:m]
        b = work[m:2 * m]
        c = work[2 * m:3 * m]
        d = work[3 * m:4 * m]
        x = work[4 * m:5 * m]
        for i in range(m):
            h0 = t[i] - t[i - 1] if i > 0 else t[n - 1] - t[n - 2]
            h1 = t[i + 1] - t[i]
            a[i] = h0
            b[i] = 2.0 * (h0 + h1)
            c[i] = h1
            if i > 0:
                d[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0)
            else:
                d[i] = 6.0 * ((y[1] - y[0]) / h1 - (y[n - 1] - y[n - 2]) / h0)
        _cyclic(a, b, c, d, x, work[5 * m:11 * m])
        for i in range(m):
            M[i] = x[i]
        M[n - 1] = x[0]
        return
    m = n - 2
    M[0] = 0.0
    M[n - 1] = 0.0
    if m <= 0:
        return
    a = work[0:m]
    b = work[m:2 * m]
    c = work[2 * m:3 * m]
    d = work[3 * m:4 * m]
    x = work[4 * m:5 * m]
    cp = work[5 * m:6 * m]
    dp = work[6 * m:7 * m]
    for i in range(1, n - 1):
        h0 = t[i] - t[i - 1]
        h1 = t[i + 1] - t[i]
        a[i - 1] = h0
        b[i - 1] = 2.0 * (h0 + h1)
        c[i - 1] = h1
        d[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0)
    _thomas(a, b, c, d, x, cp, dp)
    for i in range(m):
        M[i + 1] = x[i]


def spline_eval(knots, values, query, bint periodic):
    cdef double[:] t = np.ascontiguousarray(knots, dtype=np.float64)
    V = np.asarray(values, dtype=np.float64)
    squeeze = V.ndim == 1
    if squeeze:
        V = V[:, None]
    cdef double[:] q = np.ascontiguousarray(query, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], nq = q.shape[0], k, j, lo, hi, mid
    cdef double[:] M = np.empty(n)
    cdef double[:] work = np.empty(11 * n + 8)
    cdef double[:] y
    cdef double h, A, B, tt
    out = np.empty((nq, V.shape[1]))
    cdef double[:, :] O = out
    for j in range(V.shape[1]):
        y = np.ascontiguousarray(V[:, j])
        _spline_moments(t, y, M, periodic, work)
        with nogil:
            for k in range(nq):
                tt = q[k]
                if periodic:
                    h = t[n - 1] - t[0]
                    while tt < t[0]:
                        tt += h
                    while tt > t[n - 1]:
                        tt -= h
                lo = 0
                hi = n - 2
                while lo < hi:
                    mid = (lo + hi + 1) // 2
                    if t[mid] <= tt:
                        lo = mid
                    else:
                        hi = mid - 1
                h = t[lo + 1] - t[lo]
                A = t[lo + 1] - tt
                B = tt - t[lo]
                O[k, j] = (M[lo] * A * A * A + M[lo + 1] * B * B * B) / (6.0 * h) \
                    + (y[lo] / h - M[lo] * h / 6.0) * A \
                    + (y[lo + 1] / h - M[lo + 1] * h / 6.0) * B
    if squeeze:
        return out[:, 0]
    return out


cdef double _pts_to_segs(double[:, :] P, double[:, :] Q) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double best = INFINITY, ax, ay, bx, by, px, py, ab2, tt, dx, dy, d2
    for j in range(Q.shape[0] - 1):
        ax = Q[j, 0]
        ay = Q[j, 1]
        bx = Q[j + 1, 0] - ax
        by = Q[j + 1, 1] - ay
        ab2 = bx * bx + by * by
        if ab2 <= 0.0:
            ab2 = 1.0
        for i in range(P.shape[0]):
            px = P[i, 0] - ax
            py = P[i, 1] - ay
            tt = (px * bx + py * by) / ab2
            if tt < 0.0:
                tt = 0.0
            elif tt > 1.0:
                tt = 1.0
            dx = px - tt * bx
            dy = py - tt * by
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
    return best


def polyline_distance(A, B):
    cdef double[:, :] P = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, :] Q = np.ascontiguousarray(B, dtype=np.float64)
    cdef double d1, d2
    with nogil:
        d1 = _pts_to_segs(P, Q)
        d2 = _pts_to_segs(Q, P)
    return sqrt(d1 if d1 < d2 else d2)
