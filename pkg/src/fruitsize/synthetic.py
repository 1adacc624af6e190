"""Ray-cast synthetic RGB-D scenes of spherical fruit with exact ground truth.

Each fruit is a sphere placed so its image silhouette is disjoint from
every other fruit and from the image border. Depth is the optical-axis
distance to the nearest ray/sphere hit (a z-buffer over all spheres and
a flat background wall). Occlusion slices a cap off each sphere with a
plane whose normal lies in the image plane: with occlusion fraction
``o`` the cap of height ``2*o*R`` is hidden behind a leaf sitting just in
front of the fruit, so ``o = 0.5`` leaves half the sphere visible.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import binary_dilation

from .dataset import AnnotatedFruit, Frame, Ripeness, write_depth_png, write_manifest, write_rgb_png
from .errors import InvalidInputError, PlacementError
from .estimators2d import FruitMask
from .geometry import CameraIntrinsics

LEAF_GAP_MM = 30.0
PLACEMENT_RETRIES = 2000


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    n_fruits: int = 6
    diameter_range: tuple[float, float] = (40.0, 95.0)
    depth_range: tuple[float, float] = (1000.0, 1500.0)
    noise_sigma: float = 0.0
    occlusion: float = 0.0
    outlier_fraction: float = 0.0
    width: int = 848
    height: int = 480
    focal_length_px: float = 600.0
    depth_scale: float = 0.05
    background_offset: float = 500.0
    min_gap_px: int = 2
    placement_spread: float = 1.0  # fruit centres within this fraction of the image around its centre

    def __post_init__(self):
        d0, d1 = self.diameter_range
        z0, z1 = self.depth_range
        if not (0 < d0 <= d1):
            raise InvalidInputError(f"bad diameter range {self.diameter_range}")
        if not (0 < z0 <= z1) or z0 <= d1:
            raise InvalidInputError(f"bad depth range {self.depth_range}")
        if self.noise_sigma < 0 or not (0 <= self.occlusion < 1) or not (0 <= self.outlier_fraction <= 1):
            raise InvalidInputError("noise_sigma >= 0, occlusion in [0, 1), outlier_fraction in [0, 1] required")
        if not (0 < self.placement_spread <= 1):
            raise InvalidInputError("placement_spread must be in (0, 1]")
        if self.n_fruits < 0:
            raise InvalidInputError("n_fruits must be >= 0")
        if (z1 + self.background_offset) / self.depth_scale > np.iinfo(np.uint16).max:
            raise InvalidInputError("background depth does not fit in 16 bits at this depth_scale")

    @property
    def intrinsics(self):
        return CameraIntrinsics.centered(self.focal_length_px, self.width, self.height, self.depth_scale)

    @property
    def background_depth(self):
        return self.depth_range[1] + self.background_offset


@dataclass(frozen=True)
class SyntheticFruit:
    fruit_id: str
    center: tuple[float, float, float]
    radius: float
    cut_normal: tuple[float, float, float]
    ripeness: Ripeness


@dataclass(eq=False)
class SyntheticScene:
    frame: Frame
    depth_mm: np.ndarray  # float depth before 16-bit quantisation (noise and clutter included)
    rgb: np.ndarray
    fruits: list[SyntheticFruit] = field(default_factory=list)


def ray_sphere_depth(us, vs, intr, center, radius):
    """Optical-axis depth of the front ray/sphere hit per pixel; NaN on a miss."""
    u0, v0 = intr.principal_point
    f = intr.focal_length_px
    dx = (us - u0) / f
    dy = (vs - v0) / f
    cx, cy, cz = center
    a = dx * dx + dy * dy + 1.0
    b = dx * cx + dy * cy + cz  # half of -b in the usual quadratic form
    c = cx * cx + cy * cy + cz * cz - radius * radius
    disc = b * b - a * c
    hit = disc >= 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    # near root written as c / (b + root) to avoid cancellation
    t = np.where(hit, c / (b + root), np.nan)
    return t


def _silhouette_window(center, radius, intr, width, height):
    cx, cy, cz = center
    f = intr.focal_length_px
    u0, v0 = intr.principal_point
    uc, vc = cx * f / cz + u0, cy * f / cz + v0
    # silhouette of an off-axis sphere is an ellipse stretched radially;
    # bound it by the projection of the sphere's bounding cube corners
    reach = f * radius / (cz - radius) * (1.0 + math.hypot(cx, cy) / (cz - radius)) + 2
    return (max(0, int(math.floor(uc - reach))), max(0, int(math.floor(vc - reach))),
            min(width, int(math.ceil(uc + reach)) + 1), min(height, int(math.ceil(vc + reach)) + 1))


def _render_fruit(center, radius, normal, occlusion, intr, width, height):
    """Front depth of one sphere over its window plus the visible/occluded split."""
    ua, va, ub, vb = _silhouette_window(center, radius, intr, width, height)
    vs, us = np.mgrid[va:vb, ua:ub].astype(np.float64)
    z = ray_sphere_depth(us, vs, intr, center, radius)
    hit = ~np.isnan(z)
    f = intr.focal_length_px
    u0, v0 = intr.principal_point
    px = (us - u0) * z / f - center[0]
    py = (vs - v0) * z / f - center[1]
    cut = radius * (1.0 - 2.0 * occlusion)
    occluded = hit & (px * normal[0] + py * normal[1] > cut) if occlusion > 0 else np.zeros_like(hit)
    return (ua, va, ub, vb), z, hit, occluded


def generate_synthetic_scene(spec, out_dir=None, frame_id="synth-0"):
    """Render one frame. With ``out_dir`` the rasters are written there
    (``rgb/<id>.png``, ``depth/<id>.png``) and the frame refers to them."""
    rng = np.random.default_rng(spec.seed)
    intr = spec.intrinsics
    w, h = spec.width, spec.height
    occupied = np.zeros((h, w), dtype=bool)
    zbuf = np.full((h, w), spec.background_depth)
    label = np.full((h, w), -1, dtype=np.int64)  # fruit index per visible pixel
    leaf = np.zeros((h, w), dtype=bool)
    fruits = []
    f = intr.focal_length_px
    u0, v0 = intr.principal_point

    for i in range(spec.n_fruits):
        for _ in range(PLACEMENT_RETRIES):
            radius = rng.uniform(*spec.diameter_range) / 2.0
            cz = rng.uniform(*spec.depth_range)
            half_u = spec.placement_spread * (w - 1) / 2.0
            half_v = spec.placement_spread * (h - 1) / 2.0
            uc = rng.uniform(u0 - half_u, u0 + half_u)
            vc = rng.uniform(v0 - half_v, v0 + half_v)
            phi = rng.uniform(0, 2 * math.pi)
            center = ((uc - u0) * cz / f, (vc - v0) * cz / f, cz)
            normal = (math.cos(phi), math.sin(phi), 0.0)
            (ua, va, ub, vb), z, hit, occ = _render_fruit(center, radius, normal, spec.occlusion, intr, w, h)
            if not hit.any():
                continue
            hv, hu = np.nonzero(hit)
            # silhouette must stay clear of the border and of other fruit
            if hu.min() + ua < spec.min_gap_px or hv.min() + va < spec.min_gap_px:
                continue
            if hu.max() + ua >= w - spec.min_gap_px or hv.max() + va >= h - spec.min_gap_px:
                continue
            g = spec.min_gap_px
            region = occupied[max(0, va - g):vb + g, max(0, ua - g):ub + g]
            if region.any():
                pad = np.zeros_like(region)
                oy, ox = va - max(0, va - g), ua - max(0, ua - g)
                pad[oy:oy + hit.shape[0], ox:ox + hit.shape[1]] = hit
                if (binary_dilation(pad, iterations=g) & region).any():
                    continue
            break
        else:
            raise PlacementError(f"could not place fruit {i} of {spec.n_fruits} after {PLACEMENT_RETRIES} tries")

        sl = (slice(va, vb), slice(ua, ub))
        occupied[sl] |= hit
        vis = hit & ~occ
        zbuf[sl] = np.where(vis, z, zbuf[sl])
        label[sl] = np.where(vis, i, label[sl])
        zbuf[sl] = np.where(occ, center[2] - radius - LEAF_GAP_MM, zbuf[sl])
        leaf[sl] |= occ
        ripeness = Ripeness.RIPE if rng.random() < 0.5 else Ripeness.UNRIPE
        fruits.append(SyntheticFruit(f"{frame_id}/{i}", center, radius, normal, ripeness))

    depth = zbuf.copy()
    if spec.noise_sigma > 0:
        depth += rng.normal(0.0, spec.noise_sigma, size=depth.shape)
    if spec.outlier_fraction > 0:
        fg = np.flatnonzero(label.ravel() >= 0)
        k = int(round(spec.outlier_fraction * fg.size))
        pick = rng.choice(fg, size=k, replace=False)
        depth.ravel()[pick] = rng.uniform(0.5 * spec.depth_range[0], spec.background_depth, size=k)
    depth = np.maximum(depth, spec.depth_scale)  # noise must not produce invalid (0) depth
    units = np.rint(depth / spec.depth_scale).astype(np.uint16)

    rgb = _shade(label, leaf, fruits, depth)
    annotated = []
    for i, fr in enumerate(fruits):
        mask_img = label == i
        if not mask_img.any():
            raise PlacementError(f"fruit {fr.fruit_id} is fully occluded")
        mask = FruitMask.from_image(mask_img)
        annotated.append(AnnotatedFruit(fr.fruit_id, mask.box, fr.ripeness, mask, 2.0 * fr.radius))

    rgb_rel, depth_rel = f"rgb/{_safe(frame_id)}.png", f"depth/{_safe(frame_id)}.png"
    root = Path(out_dir) if out_dir is not None else Path(".")
    frame = Frame(frame_id, rgb_rel, depth_rel, intr, tuple(annotated), None, root)
    if out_dir is not None:
        (root / "rgb").mkdir(parents=True, exist_ok=True)
        (root / "depth").mkdir(parents=True, exist_ok=True)
        write_rgb_png(root / rgb_rel, rgb)
        write_depth_png(root / depth_rel, units)
    frame.__dict__["depth_raw"] = units
    return SyntheticScene(frame, depth, rgb, fruits)


def _safe(name):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def _shade(label, leaf, fruits, depth):
    rgb = np.full(label.shape + (3,), 96, dtype=np.uint8)
    colours = {Ripeness.RIPE: (200, 40, 30), Ripeness.UNRIPE: (120, 180, 60)}
    for i, fr in enumerate(fruits):
        m = label == i
        if not m.any():
            continue
        # darker towards the limb
        shade = np.clip(1.0 - (depth[m] - depth[m].min()) / (fr.radius + 1e-9), 0.3, 1.0)
        rgb[m] = (np.array(colours[fr.ripeness])[None, :] * shade[:, None]).astype(np.uint8)
    rgb[leaf] = (30, 110, 40)
    return rgb


def write_synthetic_dataset(spec, n_frames, out_dir):
    """Render ``n_frames`` scenes under ``out_dir`` plus ``manifest.json``.

    Frame ``k`` uses the seed spawned as child ``k`` of ``spec.seed``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    children = np.random.SeedSequence(spec.seed).spawn(n_frames)
    frames = []
    for k, child in enumerate(children):
        seed = int(child.generate_state(1, dtype=np.uint64)[0])
        frame_spec = SceneSpec(**{**asdict(spec), "seed": seed})
        scene = generate_synthetic_scene(frame_spec, out_dir, frame_id=f"synth-{k:04d}")
        frames.append(scene.frame)
    manifest = out_dir / "manifest.json"
    write_manifest(frames, manifest)
    return manifest
