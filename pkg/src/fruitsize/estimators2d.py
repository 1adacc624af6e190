"""Image-plane diameter estimators: bounding box, largest segment, Hough circle.

All three return a length in pixels; convert with
:func:`fruitsize.geometry.pixel_to_metric`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import EmptyMaskError, InsufficientEvidenceError, InvalidInputError


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel-edge coordinates.

    Pixel ``(u, v)`` covers ``[u, u+1) x [v, v+1)``, so the tight box of a
    mask spanning columns 3..7 has ``u_min=3, u_max=8`` and width 5.
    """

    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        if not (self.u_max > self.u_min and self.v_max > self.v_min):
            raise InvalidInputError(f"degenerate box {self.as_list()}")

    @property
    def width(self):
        return self.u_max - self.u_min

    @property
    def height(self):
        return self.v_max - self.v_min

    @property
    def area(self):
        return self.width * self.height

    @property
    def diagonal(self):
        return math.hypot(self.width, self.height)

    def as_list(self):
        return [self.u_min, self.v_min, self.u_max, self.v_max]

    def contains_pixels(self, uv):
        uv = np.asarray(uv)
        return bool(
            np.all(uv[:, 0] >= self.u_min) and np.all(uv[:, 0] + 1 <= self.u_max)
            and np.all(uv[:, 1] >= self.v_min) and np.all(uv[:, 1] + 1 <= self.v_max)
        )


class FruitMask:
    """A set of integer pixel coordinates ``(u, v)``.

    Pixels are stored unique and sorted row-major (by v, then u).
    """

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        uv = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
        if len(uv) == 0:
            raise EmptyMaskError("mask has no pixels")
        uv = np.unique(uv[:, ::-1], axis=0)[:, ::-1]
        self.pixels = np.ascontiguousarray(uv)

    @classmethod
    def from_image(cls, image, offset=(0, 0)):
        v, u = np.nonzero(np.asarray(image))
        return cls(np.column_stack([u + offset[0], v + offset[1]]))

    def to_image(self, shape):
        """Dense boolean raster of ``shape = (height, width)``."""
        img = np.zeros(shape, dtype=bool)
        img[self.pixels[:, 1], self.pixels[:, 0]] = True
        return img

    @property
    def box(self):
        u, v = self.pixels[:, 0], self.pixels[:, 1]
        return BoundingBox(int(u.min()), int(v.min()), int(u.max()) + 1, int(v.max()) + 1)

    def translated(self, du, dv):
        return FruitMask(self.pixels + np.array([du, dv], dtype=np.int64))

    def __len__(self):
        return len(self.pixels)

    def __eq__(self, other):
        return isinstance(other, FruitMask) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"FruitMask(n={len(self)}, box={self.box.as_list()})"


@dataclass(frozen=True)
class CircleFit:
    center: tuple[float, float]
    radius: float
    accumulator_score: int

    @property
    def diameter(self):
        return 2.0 * self.radius


@dataclass(frozen=True)
class HoughConfig:
    radius_frac: tuple[float, float] = (0.25, 0.75)  # of max(h, w) of the mask box
    radius_step: float = 1.0
    center_margin: float = 0.25  # each side of the box pushed out by this fraction of its extent
    min_boundary_pixels: int = 8

    def __post_init__(self):
        lo, hi = self.radius_frac
        if not (0 < lo <= hi):
            raise InvalidInputError(f"bad radius fraction range {self.radius_frac}")
        if not self.radius_step > 0:
            raise InvalidInputError("radius_step must be > 0")
        if self.center_margin < 0:
            raise InvalidInputError("center_margin must be >= 0")


def estimate_2d_bbox(box):
    """Pixel diameter as the longer side of the box."""
    if not isinstance(box, BoundingBox):
        box = BoundingBox(*box)
    return float(max(box.height, box.width))


# --- convex hull + rotating calipers -------------------------------------

def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points):
    """Counter-clockwise hull of integer points (Andrew's monotone chain).

    Collinear boundary points are dropped. Returns a list of ``(u, v)``
    Python-int tuples so all later arithmetic is exact.
    """
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.int64).tolist())))
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _row_extremes(uv):
    # hull vertices of a lattice set are among each row's leftmost/rightmost pixels
    v = uv[:, 1]
    order = np.lexsort((uv[:, 0], v))
    s = uv[order]
    first = np.r_[True, s[1:, 1] != s[:-1, 1]]
    last = np.r_[s[1:, 1] != s[:-1, 1], True]
    return s[first | last]


def _d2(a, b):
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    return dx * dx + dy * dy


def calipers_max_sqdist(hull):
    """Largest squared distance between vertices of a CCW convex polygon."""
    n = len(hull)
    if n < 2:
        return 0
    if n == 2:
        return _d2(hull[0], hull[1])
    best = 0
    j = 1
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        while abs(_cross(a, b, hull[(j + 1) % n])) > abs(_cross(a, b, hull[j])):
            j = (j + 1) % n
        best = max(best, _d2(a, hull[j]), _d2(b, hull[j]))
    return best


def lseg_sqdist(uv):
    """Exact squared diameter of an integer pixel set via hull + calipers."""
    uv = np.asarray(uv, dtype=np.int64).reshape(-1, 2)
    if len(uv) == 0:
        raise EmptyMaskError("mask has no pixels")
    return calipers_max_sqdist(convex_hull_2d(_row_extremes(uv)))


def bruteforce_sqdist_2d(uv):
    """O(n^2) squared diameter; the reference the calipers path must match."""
    uv = np.ascontiguousarray(uv, dtype=np.int64).reshape(-1, 2)
    if len(uv) == 0:
        raise EmptyMaskError("mask has no pixels")
    return kernels.max_sqdist_2d(uv)[0]


def estimate_2d_lseg(mask):
    """Largest pixel-centre to pixel-centre distance inside the mask."""
    uv = mask.pixels if isinstance(mask, FruitMask) else mask
    return math.sqrt(lseg_sqdist(uv))


# --- Hough circle -------------------------------------------------------

def boundary_pixels(mask):
    """Mask pixels with at least one 4-neighbour outside the mask."""
    uv = mask.pixels
    u0, v0 = uv.min(axis=0) - 1
    grid = np.zeros(tuple(uv.max(axis=0)[::-1] - (v0, u0) + 2), dtype=bool)
    gu, gv = uv[:, 0] - u0, uv[:, 1] - v0
    grid[gv, gu] = True
    interior = (grid[gv - 1, gu] & grid[gv + 1, gu] & grid[gv, gu - 1] & grid[gv, gu + 1])
    return uv[~interior]


def hough_accumulator(mask, config=HoughConfig()):
    """Vote over ``(radius, u_c, v_c)``; returns ``(acc, radii, u_lo, v_lo)``."""
    edge = boundary_pixels(mask)
    if len(edge) < config.min_boundary_pixels:
        raise InsufficientEvidenceError(
            f"{len(edge)} boundary pixels, need {config.min_boundary_pixels}"
        )
    box = mask.box
    extent = max(box.width, box.height)
    r_lo = math.ceil(config.radius_frac[0] * extent)
    r_hi = math.floor(config.radius_frac[1] * extent)
    if r_hi < r_lo:
        raise InsufficientEvidenceError(f"empty radius range for a {extent}px mask")
    nr = int(math.floor((r_hi - r_lo) / config.radius_step)) + 1
    mu = config.center_margin * box.width
    mv = config.center_margin * box.height
    u_lo = math.floor(box.u_min - mu)
    u_hi = math.ceil(box.u_max - 1 + mu)
    v_lo = math.floor(box.v_min - mv)
    v_hi = math.ceil(box.v_max - 1 + mv)
    acc = kernels.hough_votes(
        np.ascontiguousarray(edge[:, 0]), np.ascontiguousarray(edge[:, 1]),
        u_lo, v_lo, u_hi - u_lo + 1, v_hi - v_lo + 1,
        float(r_lo), float(config.radius_step), nr,
    )
    radii = r_lo + config.radius_step * np.arange(nr)
    return acc, radii, u_lo, v_lo


def estimate_2d_hough(mask, config=HoughConfig()):
    """Best-supported circle through the mask boundary.

    Ties go to the smaller radius, then the smaller ``(u_c, v_c)``.
    """
    acc, radii, u_lo, v_lo = hough_accumulator(mask, config)
    k, iu, iv = np.unravel_index(int(np.argmax(acc)), acc.shape)
    return CircleFit(
        center=(float(u_lo + iu), float(v_lo + iv)),
        radius=float(radii[k]),
        accumulator_score=int(acc[k, iu, iv]),
    )
