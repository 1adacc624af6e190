"""Point-cloud diameter estimators: largest segment, least-squares sphere, RANSAC sphere."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import kernels
from .errors import DegenerateGeometryError, InsufficientPointsError, InvalidInputError
from .geometry import FruitPointCloud

BRUTE_FORCE_BELOW = 64
LSQ_MIN_POINTS = 10
DET_EPS = 1e-9  # on the determinant of the unit-scaled 3x3 circumsphere system


@dataclass(frozen=True)
class SphereFit:
    center: tuple[float, float, float]
    radius: float
    inlier_count: int
    residual_rms: float
    iterations_used: int
    converged: bool

    @property
    def diameter(self):
        return 2.0 * self.radius


@dataclass(frozen=True)
class RansacConfig:
    delta: float = 3.0
    max_iterations: int = 500
    inlier_ratio_threshold: float = 0.9
    seed: int = 0
    refit: bool = True

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidInputError("delta must be > 0")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")
        if not (0 < self.inlier_ratio_threshold <= 1):
            raise InvalidInputError("inlier_ratio_threshold must be in (0, 1]")


def _points(cloud):
    pts = cloud.points if isinstance(cloud, FruitPointCloud) else cloud
    return np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 3)


# --- largest segment ---------------------------------------------------

def bruteforce_diameter_3d(points):
    """O(n^2) farthest-pair distance, the shipping fallback and test oracle."""
    pts = _points(points)
    if len(pts) < 2:
        raise InsufficientPointsError(f"need >= 2 points, got {len(pts)}")
    return math.sqrt(kernels.max_sqdist_3d(pts)[0])


def _hull_candidates(pts):
    # scipy's default Qhull options include Qc, so points dropped as
    # coplanar-within-tolerance are reported and kept as candidates
    hull = ConvexHull(pts)
    idx = np.union1d(hull.vertices, hull.coplanar[:, 0] if len(hull.coplanar) else [])
    return pts[np.sort(idx.astype(np.intp))]


def estimate_3d_lseg(cloud):
    """Largest pairwise distance in the cloud (mm).

    Above :data:`BRUTE_FORCE_BELOW` points only hull vertices are scanned,
    since the farthest pair of any set lies on its convex hull.
    """
    pts = _points(cloud)
    if len(pts) < 2:
        raise InsufficientPointsError(f"need >= 2 points, got {len(pts)}")
    if len(pts) >= BRUTE_FORCE_BELOW:
        try:
            pts = _hull_candidates(pts)
        except (QhullError, ValueError):
            pass  # flat or otherwise degenerate cloud: scan everything
    return math.sqrt(kernels.max_sqdist_3d(np.ascontiguousarray(pts))[0])


# --- sphere fitting ------------------------------------------------------

def _geometric_rms(pts, center, radius):
    r = np.linalg.norm(pts - center, axis=1) - radius
    return float(np.sqrt(np.mean(r * r)))


def sphere_from_4_points(p1, p2, p3, p4):
    """Circumsphere of four points.

    Solved relative to ``p1``: ``2 (p_i - p1) . c' = |p_i - p1|^2`` for
    i = 2..4 (rows scaled to unit max component), ``center = p1 + c'``.
    """
    sph = kernels.circumsphere(p1, p2, p3, p4, DET_EPS)
    if sph is None:
        raise DegenerateGeometryError("coplanar, collinear or coincident sample")
    center, radius = np.array(sph[:3]), sph[3]
    pts = np.array([p1, p2, p3, p4], dtype=np.float64)
    return SphereFit(tuple(sph[:3]), radius, 4, _geometric_rms(pts, center, radius), 1, True)


def algebraic_cost(pts, center, radius):
    """Sum of squared algebraic residuals ``(|p - c|^2 - r^2)^2``."""
    d = pts - np.asarray(center)
    f = np.einsum("ij,ij->i", d, d) - radius * radius
    return float(f @ f)


def _linear_sphere(q):
    # |q|^2 = 2 q.c + k with k = r^2 - |c|^2: linear in (c, k)
    a = np.column_stack([2.0 * q, np.ones(len(q))])
    b = np.einsum("ij,ij->i", q, q)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    c, k = sol[:3], sol[3]
    r2 = k + c @ c
    return c, math.sqrt(r2) if r2 > 0 else 0.0


def lsq_sphere_fit(cloud, max_iterations=100, tol=1e-9):
    """Minimise ``sum (|p - c|^2 - r^2)^2`` over centre and radius.

    Starts from the linear algebraic solution and refines with
    Levenberg-damped Gauss-Newton (``J^T J + lambda I``, lambda from 1e-3, x10 on a rejected step,
    /10 on an accepted one). Only cost-decreasing steps are accepted.
    """
    pts = _points(cloud)
    n = len(pts)
    if n < LSQ_MIN_POINTS:
        raise InsufficientPointsError(f"need >= {LSQ_MIN_POINTS} points, got {n}")
    origin = pts.mean(axis=0)
    q = pts - origin
    sv = np.linalg.svd(q, compute_uv=False)
    if sv[0] == 0.0 or sv[2] / sv[0] < 1e-9:
        raise DegenerateGeometryError("point cloud is coplanar")

    c, r = _linear_sphere(q)
    theta = np.array([*c, r])

    def residuals(t):
        d = q - t[:3]
        return np.einsum("ij,ij->i", d, d) - t[3] * t[3], d

    f, d = residuals(theta)
    cost = f @ f
    lam = 1e-3
    converged = False
    it = 0
    while it < max_iterations:
        it += 1
        jac = np.column_stack([-2.0 * d, np.full(n, -2.0 * theta[3])])
        jtj = jac.T @ jac
        g = jac.T @ f
        accepted = False
        while lam < 1e16:
            step = np.linalg.solve(jtj + lam * np.eye(4), -g)
            cand = theta + step
            f_new, d_new = residuals(cand)
            cost_new = f_new @ f_new
            if cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged = True  # no descent direction left at machine precision
            break
        rel = np.linalg.norm(step) / max(np.linalg.norm(cand), 1e-300)
        theta, f, d, cost = cand, f_new, d_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if rel < tol:
            converged = True
            break

    center = origin + theta[:3]
    radius = abs(float(theta[3]))
    return SphereFit(
        tuple(center.tolist()), radius, n, _geometric_rms(pts, center, radius), it, converged
    )


def sphere_inliers(pts, center, radius, delta):
    """Strict band test ``-delta < |p - c| - r < delta``."""
    dev = kernels.radial_deviation(_points(pts), *center, radius)
    return (dev > -delta) & (dev < delta)


def draw_samples(rng, n, m):
    """``m`` rows of 4 distinct indices in ``[0, n)``.

    The k-th index is drawn from ``[0, n - k)`` and shifted past the
    indices already taken, so no rejection is needed.
    """
    raw = np.column_stack([rng.integers(0, n - k, size=m) for k in range(4)])
    out = np.empty((m, 4), dtype=np.int64)
    for k in range(4):
        x = raw[:, k].copy()
        taken = np.sort(out[:, :k], axis=1)
        for j in range(k):
            x += x >= taken[:, j]
        out[:, k] = x
    return out


def ransac_sphere(cloud, config=RansacConfig()):
    """Robust sphere fit from random 4-point samples.

    Degenerate samples are redrawn without using up an iteration, up to
    ``10 * max_iterations`` draws in total. The best candidate (most
    inliers, then lowest inlier RMS) is refit by :func:`lsq_sphere_fit`
    on its inliers when ``config.refit`` is set and there are enough of them.
    """
    pts = _points(cloud)
    n = len(pts)
    if n < 4:
        raise InsufficientPointsError(f"need >= 4 points, got {n}")
    rng = np.random.default_rng(config.seed)
    samples = draw_samples(rng, n, 10 * config.max_iterations)
    row, count, ss, iterations, draws = kernels.ransac_search(
        pts, samples, float(config.delta), float(config.inlier_ratio_threshold),
        int(config.max_iterations), DET_EPS,
    )
    if row < 0:
        raise DegenerateGeometryError(f"all {draws} samples were degenerate")
    cx, cy, cz, r = kernels.circumsphere(*pts[samples[row]], DET_EPS)
    mask = sphere_inliers(pts, (cx, cy, cz), r, config.delta)
    if config.refit and count >= LSQ_MIN_POINTS:
        try:
            fit = lsq_sphere_fit(pts[mask])
        except DegenerateGeometryError:
            fit = None
        if fit is not None:
            return SphereFit(fit.center, fit.radius, count, fit.residual_rms, iterations, True)
    rms = math.sqrt(ss / count) if count else math.inf
    return SphereFit((cx, cy, cz), r, count, rms, iterations, True)
