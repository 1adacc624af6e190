"""Pure numpy fallback for the compiled kernels in ``_ckernels.pyx``.

Arithmetic is written in the same order as the Cython loops so results
agree bit for bit, including which pair wins a tie (first in row-major
order over i < j).
"""
import math

import numpy as np

_BLOCK = 256


def max_sqdist_2d(pts):
    pts = np.ascontiguousarray(pts, dtype=np.int64)
    n = len(pts)
    if n < 2:
        return 0, 0, 0
    best, bi, bj = -1, 0, 0
    j_idx = np.arange(n)
    for start in range(0, n - 1, _BLOCK):
        rows = pts[start:start + _BLOCK]
        dx = rows[:, None, 0] - pts[None, :, 0]
        dy = rows[:, None, 1] - pts[None, :, 1]
        d2 = dx * dx + dy * dy
        i_idx = np.arange(start, start + len(rows))
        d2[j_idx[None, :] <= i_idx[:, None]] = -1
        flat = int(np.argmax(d2))
        r, c = divmod(flat, n)
        if d2[r, c] > best:
            best, bi, bj = int(d2[r, c]), start + r, c
    return best, bi, bj


def max_sqdist_3d(pts):
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    n = len(pts)
    if n < 2:
        return 0.0, 0, 0
    best, bi, bj = -1.0, 0, 0
    j_idx = np.arange(n)
    for start in range(0, n - 1, _BLOCK):
        rows = pts[start:start + _BLOCK]
        dx = rows[:, None, 0] - pts[None, :, 0]
        dy = rows[:, None, 1] - pts[None, :, 1]
        dz = rows[:, None, 2] - pts[None, :, 2]
        d2 = dx * dx + dy * dy
        d2 = d2 + dz * dz
        i_idx = np.arange(start, start + len(rows))
        d2[j_idx[None, :] <= i_idx[:, None]] = -1.0
        flat = int(np.argmax(d2))
        r, c = divmod(flat, n)
        if d2[r, c] > best:
            best, bi, bj = float(d2[r, c]), start + r, c
    return best, bi, bj


def hough_votes(bu, bv, u_lo, v_lo, nu, nv, r_lo, r_step, nr):
    bu = np.asarray(bu, dtype=np.int64)
    bv = np.asarray(bv, dtype=np.int64)
    cu = u_lo + np.arange(nu, dtype=np.int64)
    cv = v_lo + np.arange(nv, dtype=np.int64)
    cell = (np.arange(nu)[:, None] * nv + np.arange(nv)[None, :]).ravel()
    counts = np.zeros(nr * nu * nv, dtype=np.int64)
    chunk = max(1, 2_000_000 // max(1, nu * nv))
    for start in range(0, len(bu), chunk):
        du = cu[None, :, None] - bu[start:start + chunk, None, None]
        dv = cv[None, None, :] - bv[start:start + chunk, None, None]
        d = np.sqrt((du * du + dv * dv).astype(np.float64))
        k = np.floor((d - r_lo) / r_step + 0.5).reshape(len(du), -1)
        ok = (k >= 0) & (k < nr)
        flat = k.astype(np.int64) * (nu * nv) + cell[None, :]
        counts += np.bincount(flat[ok], minlength=nr * nu * nv)
    return counts.reshape(nr, nu, nv).astype(np.int32)


def circumsphere(p1, p2, p3, p4, det_eps=1e-9):
    """``(cx, cy, cz, r)`` of the sphere through four points, or None if degenerate.

    Same Cramer's-rule arithmetic, in the same order, as the compiled kernel.
    """
    ax, ay, az = float(p1[0]), float(p1[1]), float(p1[2])
    q = [[float(p[0]) - ax, float(p[1]) - ay, float(p[2]) - az] for p in (p2, p3, p4)]
    s = 0.0
    for row in q:
        for v in row:
            t = v if v >= 0 else -v
            if t > s:
                s = t
    if s == 0.0:
        return None
    q = [[v / s for v in row] for row in q]
    rhs = [0.5 * (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]) for r in q]
    m0 = q[1][1] * q[2][2] - q[1][2] * q[2][1]
    m1 = q[1][0] * q[2][2] - q[1][2] * q[2][0]
    m2 = q[1][0] * q[2][1] - q[1][1] * q[2][0]
    det = q[0][0] * m0 - q[0][1] * m1 + q[0][2] * m2
    if (det if det >= 0 else -det) < det_eps:
        return None
    x0 = (rhs[0] * m0
          - q[0][1] * (rhs[1] * q[2][2] - q[1][2] * rhs[2])
          + q[0][2] * (rhs[1] * q[2][1] - q[1][1] * rhs[2])) / det
    x1 = (q[0][0] * (rhs[1] * q[2][2] - q[1][2] * rhs[2])
          - rhs[0] * m1
          + q[0][2] * (q[1][0] * rhs[2] - rhs[1] * q[2][0])) / det
    x2 = (q[0][0] * (q[1][1] * rhs[2] - rhs[1] * q[2][1])
          - q[0][1] * (q[1][0] * rhs[2] - rhs[1] * q[2][0])
          + rhs[0] * m2) / det
    x0, x1, x2 = x0 * s, x1 * s, x2 * s
    return ax + x0, ay + x1, az + x2, math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)


def radial_deviation(pts, cx, cy, cz, r):
    ex = pts[:, 0] - cx
    ey = pts[:, 1] - cy
    ez = pts[:, 2] - cz
    return np.sqrt(ex * ex + ey * ey + ez * ez) - r


def ransac_search(pts, samples, delta, ratio_threshold, max_iterations, det_eps=1e-9):
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    n = len(pts)
    best_row, best_count, best_ss = -1, -1, 0.0
    iterations = draws = 0
    for k in range(len(samples)):
        if iterations >= max_iterations:
            break
        draws += 1
        a, b, c, d = samples[k]
        sph = circumsphere(pts[a], pts[b], pts[c], pts[d], det_eps)
        if sph is None:
            continue
        iterations += 1
        dev = radial_deviation(pts, *sph)
        inl = (dev > -delta) & (dev < delta)
        count = int(inl.sum())
        # cumsum accumulates left to right, matching the compiled loop
        sq = dev[inl] * dev[inl]
        ss = float(np.cumsum(sq)[-1]) if count else 0.0
        if count > best_count or (count == best_count and ss < best_ss):
            best_row, best_count, best_ss = k, count, ss
        if count / n > ratio_threshold:
            break
    return best_row, best_count, best_ss, iterations, draws
