# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. ``_pykernels`` mirrors every function here
operation for operation so both backends return identical results."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor

cnp.import_array()


def max_sqdist_2d(const cnp.int64_t[:, ::1] pts):
    """Farthest pair of integer 2D points: ``(d2, i, j)`` with i < j."""
    cdef Py_ssize_t n = pts.shape[0], i, j
    cdef cnp.int64_t best = -1, dx, dy, d2
    cdef Py_ssize_t bi = 0, bj = 0
    if n < 2:
        return 0, 0, 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            dx = pts[i, 0] - pts[j, 0]
            dy = pts[i, 1] - pts[j, 1]
            d2 = dx * dx + dy * dy
            if d2 > best:
                best = d2
                bi = i
                bj = j
    return int(best), bi, bj


def max_sqdist_3d(const double[:, ::1] pts):
    """Farthest pair of 3D points: ``(d2, i, j)`` with i < j."""
    cdef Py_ssize_t n = pts.shape[0], i, j
    cdef double best = -1.0, dx, dy, dz, d2
    cdef Py_ssize_t bi = 0, bj = 0
    if n < 2:
        return 0.0, 0, 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            dx = pts[i, 0] - pts[j, 0]
            dy = pts[i, 1] - pts[j, 1]
            dz = pts[i, 2] - pts[j, 2]
            d2 = dx * dx + dy * dy
            d2 = d2 + dz * dz
            if d2 > best:
                best = d2
                bi = i
                bj = j
    return best, bi, bj


def hough_votes(const cnp.int64_t[::1] bu, const cnp.int64_t[::1] bv,
                long u_lo, long v_lo, long nu, long nv,
                double r_lo, double r_step, long nr):
    """Circle accumulator indexed ``[radius_bin, centre_u, centre_v]``.

    Every boundary pixel casts one vote into each centre cell, in the
    radius bin nearest to its distance from that centre.
    """
    acc = np.zeros((nr, nu, nv), dtype=np.int32)
    cdef cnp.int32_t[:, :, ::1] a = acc
    cdef Py_ssize_t nb = bu.shape[0], b, iu, iv
    cdef long du, dv
    cdef long k
    cdef double d
    for b in range(nb):
        for iu in range(nu):
            du = u_lo + iu - bu[b]
            for iv in range(nv):
                dv = v_lo + iv - bv[b]
                d = sqrt(<double>(du * du + dv * dv))
                k = <long>floor((d - r_lo) / r_step + 0.5)
                if 0 <= k < nr:
                    a[k, iu, iv] += 1
    return acc


cdef int _circumsphere(double ax, double ay, double az,
                       double bx, double by, double bz,
                       double cx, double cy, double cz,
                       double dx, double dy, double dz,
                       double det_eps, double* out) noexcept nogil:
    # rows are q_i = p_i - p1 (i = 2..4) scaled by s = max |component|;
    # solve (q/s) . c' = |q/s|^2 / 2 by Cramer's rule, centre = p1 + s*c'
    cdef double s = 0.0, t
    cdef double q[3][3]
    cdef double rhs[3]
    cdef int i, j
    q[0][0] = bx - ax; q[0][1] = by - ay; q[0][2] = bz - az
    q[1][0] = cx - ax; q[1][1] = cy - ay; q[1][2] = cz - az
    q[2][0] = dx - ax; q[2][1] = dy - ay; q[2][2] = dz - az
    for i in range(3):
        for j in range(3):
            t = q[i][j] if q[i][j] >= 0 else -q[i][j]
            if t > s:
                s = t
    if s == 0.0:
        return 0
    for i in range(3):
        for j in range(3):
            q[i][j] = q[i][j] / s
        rhs[i] = 0.5 * (q[i][0] * q[i][0] + q[i][1] * q[i][1] + q[i][2] * q[i][2])
    cdef double m0 = q[1][1] * q[2][2] - q[1][2] * q[2][1]
    cdef double m1 = q[1][0] * q[2][2] - q[1][2] * q[2][0]
    cdef double m2 = q[1][0] * q[2][1] - q[1][1] * q[2][0]
    cdef double det = q[0][0] * m0 - q[0][1] * m1 + q[0][2] * m2
    if (det if det >= 0 else -det) < det_eps:
        return 0
    cdef double x0 = (rhs[0] * m0
                      - q[0][1] * (rhs[1] * q[2][2] - q[1][2] * rhs[2])
                      + q[0][2] * (rhs[1] * q[2][1] - q[1][1] * rhs[2])) / det
    cdef double x1 = (q[0][0] * (rhs[1] * q[2][2] - q[1][2] * rhs[2])
                      - rhs[0] * m1
                      + q[0][2] * (q[1][0] * rhs[2] - rhs[1] * q[2][0])) / det
    cdef double x2 = (q[0][0] * (q[1][1] * rhs[2] - rhs[1] * q[2][1])
                      - q[0][1] * (q[1][0] * rhs[2] - rhs[1] * q[2][0])
                      + rhs[0] * m2) / det
    x0 = x0 * s
    x1 = x1 * s
    x2 = x2 * s
    out[0] = ax + x0
    out[1] = ay + x1
    out[2] = az + x2
    out[3] = sqrt(x0 * x0 + x1 * x1 + x2 * x2)
    return 1


def circumsphere(p1, p2, p3, p4, double det_eps=1e-9):
    """``(cx, cy, cz, r)`` of the sphere through four points, or None if degenerate."""
    cdef double out[4]
    if not _circumsphere(p1[0], p1[1], p1[2], p2[0], p2[1], p2[2],
                         p3[0], p3[1], p3[2], p4[0], p4[1], p4[2], det_eps, out):
        return None
    return out[0], out[1], out[2], out[3]


def ransac_search(const double[:, ::1] pts, const cnp.int64_t[:, ::1] samples,
                  double delta, double ratio_threshold, long max_iterations,
                  double det_eps=1e-9):
    """Score 4-point hypotheses in order until ``max_iterations`` valid
    ones have been tried or one exceeds ``ratio_threshold`` inliers.

    Returns ``(best_row, best_count, best_ss, iterations, draws)`` where
    ``best_ss`` is the inliers' sum of squared radial residuals
    (accumulated sequentially); ``best_row`` is -1 if every sample was degenerate.
    """
    cdef Py_ssize_t n = pts.shape[0], m = samples.shape[0], k, i
    cdef double sph[4]
    cdef double ex, ey, ez, dev, ss, best_ss = 0.0
    cdef long count, best_count = -1, iterations = 0, draws = 0
    cdef Py_ssize_t best_row = -1
    cdef cnp.int64_t a, b, c, d
    for k in range(m):
        if iterations >= max_iterations:
            break
        draws += 1
        a = samples[k, 0]; b = samples[k, 1]; c = samples[k, 2]; d = samples[k, 3]
        if not _circumsphere(pts[a, 0], pts[a, 1], pts[a, 2], pts[b, 0], pts[b, 1], pts[b, 2],
                             pts[c, 0], pts[c, 1], pts[c, 2], pts[d, 0], pts[d, 1], pts[d, 2],
                             det_eps, sph):
            continue
        iterations += 1
        count = 0
        ss = 0.0
        for i in range(n):
            ex = pts[i, 0] - sph[0]
            ey = pts[i, 1] - sph[1]
            ez = pts[i, 2] - sph[2]
            dev = sqrt(ex * ex + ey * ey + ez * ez) - sph[3]
            if dev > -delta and dev < delta:
                count += 1
                ss = ss + dev * dev
        if count > best_count or (count == best_count and ss < best_ss):
            best_count = count
            best_ss = ss
            best_row = k
        if <double>count / <double>n > ratio_threshold:
            break
    return best_row, best_count, best_ss, iterations, draws
