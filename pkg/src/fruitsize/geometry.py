"""Pinhole camera model: pixel/metric scaling and depth back-projection.

Pixel coordinates are lattice points: pixel ``(u, v)`` has its centre at
integer column ``u`` and row ``v``. Depth is distance along the optical
axis (not Euclidean ray length), in millimetres once ``depth_scale`` has
been applied. A depth of 0 marks an invalid reading.

Pixel sets are passed around as ``(N, 3)`` float arrays with columns
``u, v, z`` and point clouds as ``(N, 3)`` arrays with columns ``x, y, z``
in the camera frame (x right, y down, z forward).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidDepthError, InvalidInputError


class Pixel(NamedTuple):
    u: float
    v: float
    z: float


class Point3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_length_px: float
    principal_point: tuple[float, float] = (0.0, 0.0)
    depth_scale: float = 1.0  # mm per stored depth unit

    def __post_init__(self):
        if not self.focal_length_px > 0:
            raise InvalidInputError(f"focal_length_px must be > 0, got {self.focal_length_px}")
        if not self.depth_scale > 0:
            raise InvalidInputError(f"depth_scale must be > 0, got {self.depth_scale}")
        u0, v0 = self.principal_point
        object.__setattr__(self, "principal_point", (float(u0), float(v0)))

    @classmethod
    def centered(cls, focal_length_px, width, height, depth_scale=1.0):
        """Intrinsics with the principal point at the image centre."""
        return cls(focal_length_px, ((width - 1) / 2.0, (height - 1) / 2.0), depth_scale)

    def to_dict(self):
        return {
            "focal_length_px": self.focal_length_px,
            "principal_point": list(self.principal_point),
            "depth_scale": self.depth_scale,
        }


@dataclass(frozen=True, eq=False)
class FruitPointCloud:
    points: np.ndarray
    source_fruit_id: str = ""

    def __len__(self):
        return len(self.points)


def pixel_to_metric(d_p, mean_depth, intrinsics):
    """Convert an image-plane length in pixels to millimetres at ``mean_depth``."""
    if d_p < 0:
        raise InvalidInputError(f"pixel length must be >= 0, got {d_p}")
    if not mean_depth > 0:
        raise InvalidInputError(f"mean depth must be > 0, got {mean_depth}")
    return d_p * mean_depth / intrinsics.focal_length_px


def back_project(pixels, intrinsics, source_fruit_id=""):
    """Lift ``(N, 3)`` pixels ``(u, v, z)`` to camera-frame points in mm.

    Raises :class:`InvalidDepthError` naming the first pixel with z <= 0.
    """
    pix = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    bad = np.flatnonzero(~(pix[:, 2] > 0))
    if bad.size:
        raise InvalidDepthError(int(bad[0]))
    f = intrinsics.focal_length_px
    u0, v0 = intrinsics.principal_point
    z = pix[:, 2]
    pts = np.empty_like(pix)
    pts[:, 0] = (pix[:, 0] - u0) * z / f
    pts[:, 1] = (pix[:, 1] - v0) * z / f
    pts[:, 2] = z
    return FruitPointCloud(pts, source_fruit_id)


def project(points, intrinsics):
    """Inverse of :func:`back_project`; accepts one point or an ``(N, 3)`` array."""
    pts = np.asarray(points, dtype=np.float64)
    flat = pts.reshape(-1, 3)
    bad = np.flatnonzero(~(flat[:, 2] > 0))
    if bad.size:
        raise InvalidInputError(f"point {int(bad[0])} has z <= 0")
    f = intrinsics.focal_length_px
    u0, v0 = intrinsics.principal_point
    z = flat[:, 2]
    out = np.empty_like(flat)
    out[:, 0] = flat[:, 0] * f / z + u0
    out[:, 1] = flat[:, 1] * f / z + v0
    out[:, 2] = z
    return out.reshape(pts.shape)
