"""Manifest, detection-file and raster I/O, plus a depth-band fallback segmenter.

Manifest layout (UTF-8 JSON, ``schema_version`` 1)::

    {"schema_version": 1,
     "frames": [{"frame_id": "f0",
                 "rgb": "rgb/f0.png", "depth": "depth/f0.png",
                 "intrinsics": {"focal_length_px": 600.0,
                                "principal_point": [423.5, 239.5],
                                "depth_scale": 0.05},
                 "capture_date": "2022-09-14",
                 "fruits": [{"fruit_id": "f0/0", "box": [u0, v0, u1, v1],
                             "ripeness": "Ripe", "gt_diameter_mm": 76.0,
                             "mask": {"rle": "1203 7 841 ..."}}]}]}

Raster paths are relative to the manifest's directory. Depth rasters are
16-bit single-channel images; ``value * depth_scale`` is millimetres and
0 is invalid. A mask is either ``{"rle": ...}`` (row-major over the full
image, alternating background/foreground run lengths, background first)
or ``{"path": ...}`` pointing at a single-channel image (non-zero is
foreground).
"""
from __future__ import annotations

import datetime
import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import EmptyMaskError, InvalidInputError, ManifestFileError, ReferentialError, SchemaError
from .estimators2d import BoundingBox, FruitMask
from .geometry import CameraIntrinsics

SCHEMA_VERSION = 1
GT_WARN_RANGE = (20.0, 120.0)
GT_HARD_RANGE = (5.0, 300.0)
FALLBACK_BAND = 0.10


class Ripeness(str, enum.Enum):
    RIPE = "Ripe"
    UNRIPE = "Unripe"


@dataclass(frozen=True)
class AnnotatedFruit:
    fruit_id: str
    box: BoundingBox
    ripeness: Ripeness
    mask: FruitMask | None = None
    gt_diameter_mm: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "ripeness", Ripeness(self.ripeness))
        if self.gt_diameter_mm is not None and not self.gt_diameter_mm > 0:
            raise InvalidInputError(f"fruit {self.fruit_id}: gt diameter must be positive")
        if self.mask is not None and not self.box.contains_pixels(self.mask.pixels):
            raise InvalidInputError(f"fruit {self.fruit_id}: mask extends outside its box")


@dataclass(frozen=True)
class Frame:
    frame_id: str
    rgb: str
    depth: str
    intrinsics: CameraIntrinsics
    fruits: tuple[AnnotatedFruit, ...] = ()
    capture_date: str | None = None
    root: Path = field(default=Path("."), compare=False, repr=False)

    def _path(self, rel):
        return self.root / rel

    @cached_property
    def depth_raw(self):
        return _read_raster(self._path(self.depth), self.frame_id)

    @property
    def depth_mm(self):
        return self.depth_raw.astype(np.float64) * self.intrinsics.depth_scale

    @property
    def shape(self):
        return self.depth_raw.shape[:2]

    def rgb_image(self):
        return _read_raster(self._path(self.rgb), self.frame_id)


@dataclass(frozen=True)
class DetectionRecord:
    frame_id: str
    box: BoundingBox
    label: Ripeness
    score: float

    def __post_init__(self):
        object.__setattr__(self, "label", Ripeness(self.label))
        if not (0.0 <= self.score <= 1.0):
            raise SchemaError(f"detection score {self.score} outside [0, 1]")


# --- run-length masks ----------------------------------------------------

def rle_encode(image):
    """Row-major run lengths of a boolean image, background run first."""
    flat = np.asarray(image, dtype=bool).ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.r_[0, change, flat.size]
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs.insert(0, 0)
    return " ".join(map(str, runs))


def rle_decode(text, shape):
    try:
        runs = [int(t) for t in text.split()]
    except ValueError as exc:
        raise SchemaError(f"malformed RLE mask: {exc}") from None
    if any(r < 0 for r in runs):
        raise SchemaError("malformed RLE mask: negative run length")
    total = shape[0] * shape[1]
    if sum(runs) != total:
        raise SchemaError(f"RLE mask covers {sum(runs)} pixels, image has {total}")
    values = np.arange(len(runs)) % 2 == 1
    return np.repeat(values, runs).reshape(shape)


# --- rasters -------------------------------------------------------------

def _read_raster(path, frame_id=None):
    path = Path(path)
    if not path.is_file():
        raise ManifestFileError(path, frame_id)
    try:
        with Image.open(path) as im:
            im.load()
            return np.asarray(im)
    except (UnidentifiedImageError, OSError) as exc:
        raise ManifestFileError(path, frame_id, reason=f"cannot decode raster ({exc})") from None


def write_depth_png(path, depth_units):
    arr = np.asarray(depth_units)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > np.iinfo(np.uint16).max:
        raise InvalidInputError("depth values do not fit in 16 bits")
    Image.fromarray(arr.astype(np.uint16)).save(path)


def write_rgb_png(path, rgb):
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path)


# --- manifest ------------------------------------------------------------

def _require(obj, key, ctx):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{ctx}: missing field {key!r}")
    return obj[key]


def _parse_box(raw, ctx):
    if not (isinstance(raw, list) and len(raw) == 4 and all(isinstance(x, (int, float)) for x in raw)):
        raise SchemaError(f"{ctx}: box must be [u_min, v_min, u_max, v_max]")
    try:
        return BoundingBox(*[float(x) for x in raw])
    except InvalidInputError as exc:
        raise SchemaError(f"{ctx}: {exc}") from None


def _check_gt(value, ctx):
    if value is None:
        return None
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SchemaError(f"{ctx}: gt_diameter_mm must be a number")
    value = float(value)
    if not (GT_HARD_RANGE[0] <= value <= GT_HARD_RANGE[1]):
        raise SchemaError(f"{ctx}: gt diameter {value} mm outside {GT_HARD_RANGE}")
    if not (GT_WARN_RANGE[0] <= value <= GT_WARN_RANGE[1]):
        warnings.warn(f"{ctx}: gt diameter {value} mm outside the usual {GT_WARN_RANGE} range")
    return value


def _parse_mask(raw, shape, root, frame_id, ctx):
    if raw is None:
        return None
    if not isinstance(raw, dict) or len(raw) != 1 or not ({"rle", "path"} & raw.keys()):
        raise SchemaError(f"{ctx}: mask must be {{'rle': ...}} or {{'path': ...}}")
    if "rle" in raw:
        if not isinstance(raw["rle"], str):
            raise SchemaError(f"{ctx}: rle must be a string")
        img = rle_decode(raw["rle"], shape)
    else:
        img = _read_raster(root / raw["path"], frame_id)
        if img.ndim != 2 or img.shape != tuple(shape):
            raise SchemaError(f"{ctx}: mask image must be single-channel {shape}, got {img.shape}")
        img = img != 0
    if not img.any():
        raise SchemaError(f"{ctx}: mask is empty")
    return FruitMask.from_image(img)


def _parse_fruit(raw, shape, root, frame_id, ctx):
    fruit_id = _require(raw, "fruit_id", ctx)
    if not isinstance(fruit_id, str):
        raise SchemaError(f"{ctx}: fruit_id must be a string")
    ctx = f"{ctx} fruit {fruit_id!r}"
    box = _parse_box(_require(raw, "box", ctx), ctx)
    h, w = shape
    if box.u_min < 0 or box.v_min < 0 or box.u_max > w or box.v_max > h:
        raise SchemaError(f"{ctx}: box {box.as_list()} outside the {w}x{h} image")
    ripeness = _require(raw, "ripeness", ctx)
    if ripeness not in {r.value for r in Ripeness}:
        raise SchemaError(f"{ctx}: ripeness must be 'Ripe' or 'Unripe', got {ripeness!r}")
    mask = _parse_mask(raw.get("mask"), shape, root, frame_id, ctx)
    gt = _check_gt(raw.get("gt_diameter_mm"), ctx)
    try:
        return AnnotatedFruit(fruit_id, box, Ripeness(ripeness), mask, gt)
    except InvalidInputError as exc:
        raise SchemaError(str(exc)) from None


def _parse_intrinsics(raw, ctx):
    try:
        pp = _require(raw, "principal_point", ctx)
        if not (isinstance(pp, list) and len(pp) == 2):
            raise SchemaError(f"{ctx}: principal_point must be [u0, v0]")
        return CameraIntrinsics(
            float(_require(raw, "focal_length_px", ctx)), (float(pp[0]), float(pp[1])),
            float(_require(raw, "depth_scale", ctx)),
        )
    except (InvalidInputError, TypeError) as exc:
        raise SchemaError(f"{ctx}: {exc}") from None


def _parse_frame(raw, root):
    frame_id = _require(raw, "frame_id", "frame")
    if not isinstance(frame_id, str):
        raise SchemaError("frame_id must be a string")
    ctx = f"frame {frame_id!r}"
    intr = _parse_intrinsics(_require(raw, "intrinsics", ctx), ctx)
    rgb_rel, depth_rel = _require(raw, "rgb", ctx), _require(raw, "depth", ctx)
    depth = _read_raster(root / depth_rel, frame_id)
    rgb = _read_raster(root / rgb_rel, frame_id)
    if depth.ndim != 2 or depth.dtype != np.uint16:
        raise SchemaError(f"{ctx}: depth must be a 16-bit single-channel image")
    if rgb.shape[:2] != depth.shape:
        raise SchemaError(f"{ctx}: rgb {rgb.shape[:2]} and depth {depth.shape} resolutions differ")
    date = raw.get("capture_date")
    if date is not None:
        try:
            datetime.date.fromisoformat(date)
        except (TypeError, ValueError):
            raise SchemaError(f"{ctx}: capture_date must be an ISO date, got {date!r}") from None
    fruits_raw = _require(raw, "fruits", ctx)
    if not isinstance(fruits_raw, list):
        raise SchemaError(f"{ctx}: fruits must be a list")
    fruits = tuple(_parse_fruit(f, depth.shape, root, frame_id, ctx) for f in fruits_raw)
    ids = [f.fruit_id for f in fruits]
    if len(set(ids)) != len(ids):
        raise SchemaError(f"{ctx}: duplicate fruit_id")
    frame = Frame(frame_id, rgb_rel, depth_rel, intr, fruits, date, root)
    frame.__dict__["depth_raw"] = depth  # already decoded; prime the cache
    return frame


def load_manifest(path):
    """Read and fully validate a manifest; every raster is decoded once."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestFileError(path) from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    if _require(doc, "schema_version", "manifest") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {doc.get('schema_version')!r}")
    frames_raw = _require(doc, "frames", "manifest")
    if not isinstance(frames_raw, list):
        raise SchemaError("frames must be a list")
    frames = [_parse_frame(f, path.parent) for f in frames_raw]
    ids = [f.frame_id for f in frames]
    if len(set(ids)) != len(ids):
        raise SchemaError("duplicate frame_id in manifest")
    return frames


def fruit_to_dict(fruit, shape):
    out = {
        "fruit_id": fruit.fruit_id,
        "box": fruit.box.as_list(),
        "ripeness": fruit.ripeness.value,
        "gt_diameter_mm": fruit.gt_diameter_mm,
        "mask": None,
    }
    if fruit.mask is not None:
        out["mask"] = {"rle": rle_encode(fruit.mask.to_image(shape))}
    return out


def frame_to_dict(frame):
    shape = frame.shape
    return {
        "frame_id": frame.frame_id,
        "rgb": frame.rgb,
        "depth": frame.depth,
        "intrinsics": frame.intrinsics.to_dict(),
        "capture_date": frame.capture_date,
        "fruits": [fruit_to_dict(f, shape) for f in frame.fruits],
    }


def write_manifest(frames, path):
    """Write ``frames`` as a manifest; rasters must already sit next to it."""
    doc = {"schema_version": SCHEMA_VERSION, "frames": [frame_to_dict(f) for f in frames]}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


# --- detections ----------------------------------------------------------

def load_detections(path, frame_ids=None):
    """Read a detection file: a JSON array of
    ``{frame_id, box: [u_min, v_min, u_max, v_max], class, score}``.

    When ``frame_ids`` is given, records naming other frames are rejected.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ManifestFileError(path) from None
    if not text.strip():
        return []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, list):
        raise SchemaError("detection file must be a JSON array")
    known = None if frame_ids is None else set(frame_ids)
    out = []
    for i, raw in enumerate(doc):
        ctx = f"detection {i}"
        frame_id = _require(raw, "frame_id", ctx)
        if known is not None and frame_id not in known:
            raise ReferentialError(f"{ctx}: unknown frame_id {frame_id!r}")
        label = _require(raw, "class", ctx)
        if label not in {r.value for r in Ripeness}:
            raise SchemaError(f"{ctx}: class must be 'Ripe' or 'Unripe', got {label!r}")
        score = _require(raw, "score", ctx)
        if not isinstance(score, (int, float)) or isinstance(score, bool) or math.isnan(score):
            raise SchemaError(f"{ctx}: score must be a number")
        out.append(DetectionRecord(frame_id, _parse_box(_require(raw, "box", ctx), ctx), Ripeness(label), float(score)))
    return out


def write_detections(records, path):
    doc = [
        {"frame_id": d.frame_id, "box": d.box.as_list(), "class": d.label.value, "score": d.score}
        for d in records
    ]
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def group_by_frame(records):
    groups = {}
    for rec in records:
        groups.setdefault(rec.frame_id, []).append(rec)
    return groups


# --- fallback segmentation -----------------------------------------------

def fallback_segment(frame, box, band=FALLBACK_BAND):
    """Depth-band segmentation standing in for a learned mask.

    Keeps valid-depth pixels of ``box`` within ``band`` of their median
    depth and returns the largest 4-connected component (the first in
    raster order on a size tie). This is plumbing, not a segmentation model.
    """
    depth = frame.depth_mm
    h, w = depth.shape
    u0, v0 = max(0, math.ceil(box.u_min)), max(0, math.ceil(box.v_min))
    u1, v1 = min(w, math.floor(box.u_max)), min(h, math.floor(box.v_max))
    if u1 <= u0 or v1 <= v0:
        raise EmptyMaskError("box covers no whole pixel of the frame")
    crop = depth[v0:v1, u0:u1]
    valid = crop > 0
    if not valid.any():
        raise EmptyMaskError(f"no valid depth inside box {box.as_list()}")
    med = float(np.median(crop[valid]))
    keep = valid & (np.abs(crop - med) <= band * med)
    labels, n = ndimage.label(keep)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    sizes[0] = 0
    return FruitMask.from_image(labels == int(np.argmax(sizes)), offset=(u0, v0))
