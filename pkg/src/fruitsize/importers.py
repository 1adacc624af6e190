"""Best-effort converters from two public orchard RGB-D layouts to a manifest.

These are not part of the measured pipeline. Both datasets have been
redistributed in several layouts, so each converter accepts a small,
documented layout and fails loudly on anything else. Camera intrinsics
are never guessed; they must be supplied.

OpenAccess-style layout (boxes only)::

    <root>/<rgb_dir>/<stem>.png|.jpg
    <root>/<depth_dir>/<stem>.png      16-bit, aligned to the RGB frame
    <annotations>                      VIA 2.x project/export JSON; each
                                       region is a rect whose
                                       region_attributes may carry
                                       ripeness and diameter_mm

Amodal-style layout (modal masks; amodal masks are ignored)::

    <root>/<rgb_dir>/<stem>.png|.jpg
    <root>/<depth_dir>/<stem>.png|.npy  16-bit raster or float mm array
    <root>/<mask_dir>/<stem>_<k>.png    one modal mask per fruit
    <table>                             CSV: image,fruit,diameter_mm,ripeness
"""
from __future__ import annotations

import csv
import json
import logging
import re
import shutil
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import AnnotatedFruit, Frame, Ripeness, write_depth_png, write_manifest
from .errors import ManifestFileError, SchemaError
from .estimators2d import BoundingBox, FruitMask

log = logging.getLogger(__name__)

RGB_SUFFIXES = (".png", ".jpg", ".jpeg")


def _find(directory, stem, suffixes):
    for suf in suffixes:
        p = directory / f"{stem}{suf}"
        if p.exists():
            return p
    raise ManifestFileError(directory / f"{stem}.*", stem, "no file for image")


def _ripeness(value, default):
    if value in (None, ""):
        return default
    text = str(value).strip().lower()
    for r in Ripeness:
        if text == r.value.lower():
            return r
    raise SchemaError(f"unknown ripeness {value!r}")


def _diameter(value):
    if value in (None, ""):
        return None
    return float(value)


def _copy_rgb(src, out_dir, stem):
    dst = out_dir / "rgb" / f"{stem}{src.suffix.lower()}"
    dst.parent.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(src, dst)
    with Image.open(src) as im:
        return dst.relative_to(out_dir).as_posix(), (im.height, im.width)


def _copy_depth(src, out_dir, stem, depth_scale):
    dst = out_dir / "depth" / f"{stem}.png"
    dst.parent.mkdir(parents=True, exist_ok=True)
    if src.suffix == ".npy":
        mm = np.load(src).astype(np.float64)
        units = np.where(np.isfinite(mm) & (mm > 0), np.rint(mm / depth_scale), 0)
        if units.max(initial=0) > np.iinfo(np.uint16).max:
            raise SchemaError(f"{src}: depth exceeds 16 bits at depth_scale {depth_scale}")
        write_depth_png(dst, units.astype(np.uint16))
        shape = mm.shape
    else:
        with Image.open(src) as im:
            arr = np.asarray(im)
        if arr.dtype != np.uint16 or arr.ndim != 2:
            raise SchemaError(f"{src}: depth must be a 16-bit single-channel image")
        shutil.copyfile(src, dst)
        shape = arr.shape
    return dst.relative_to(out_dir).as_posix(), shape


def _check_shapes(stem, rgb_shape, depth_shape):
    if rgb_shape != depth_shape:
        raise SchemaError(f"{stem}: rgb {rgb_shape} and depth {depth_shape} are not aligned; "
                          "export depth aligned to colour first")


def _via_regions(doc):
    """Yield ``(filename, regions)`` from a VIA 2.x project or region export."""
    entries = doc.get("_via_img_metadata", doc)
    for entry in entries.values():
        regions = entry.get("regions", [])
        if isinstance(regions, dict):  # VIA 1.x stored regions by index
            regions = list(regions.values())
        yield entry["filename"], regions


def import_openaccess(root, annotations, out_dir, intrinsics, rgb_dir="rgb", depth_dir="depth",
                      default_ripeness=Ripeness.RIPE):
    root, out_dir = Path(root), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = json.loads(Path(annotations).read_text(encoding="utf-8"))
    frames = []
    for filename, regions in sorted(_via_regions(doc)):
        stem = Path(filename).stem
        rgb_rel, rgb_shape = _copy_rgb(_find(root / rgb_dir, stem, RGB_SUFFIXES), out_dir, stem)
        depth_rel, depth_shape = _copy_depth(_find(root / depth_dir, stem, (".png",)), out_dir, stem,
                                             intrinsics.depth_scale)
        _check_shapes(stem, rgb_shape, depth_shape)
        fruits = []
        for k, reg in enumerate(regions):
            shape = reg.get("shape_attributes", {})
            if shape.get("name") != "rect":
                log.warning("%s region %d: skipping non-rect shape %r", stem, k, shape.get("name"))
                continue
            attrs = reg.get("region_attributes", {})
            x, y = float(shape["x"]), float(shape["y"])
            box = BoundingBox(x, y, x + float(shape["width"]), y + float(shape["height"]))
            fruits.append(AnnotatedFruit(
                f"{stem}/{k}", box, _ripeness(attrs.get("ripeness"), default_ripeness),
                None, _diameter(attrs.get("diameter_mm")),
            ))
        frames.append(Frame(stem, rgb_rel, depth_rel, intrinsics, tuple(fruits), None, out_dir))
    manifest = out_dir / "manifest.json"
    write_manifest(frames, manifest)
    return manifest


_MASK_NAME = re.compile(r"^(?P<stem>.+)_(?P<k>\d+)\.png$")


def import_amodal(root, table, out_dir, intrinsics, rgb_dir="images", depth_dir="depth",
                  mask_dir="modal_masks", default_ripeness=Ripeness.RIPE):
    root, out_dir = Path(root), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    info = {}
    with open(table, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            info[row["image"], row["fruit"]] = row
    masks = {}
    for p in sorted((root / mask_dir).glob("*.png")):
        m = _MASK_NAME.match(p.name)
        if m:
            masks.setdefault(m["stem"], []).append((m["k"], p))
    frames = []
    for stem, items in sorted(masks.items()):
        rgb_rel, rgb_shape = _copy_rgb(_find(root / rgb_dir, stem, RGB_SUFFIXES), out_dir, stem)
        depth_rel, depth_shape = _copy_depth(_find(root / depth_dir, stem, (".png", ".npy")), out_dir,
                                             stem, intrinsics.depth_scale)
        _check_shapes(stem, rgb_shape, depth_shape)
        fruits = []
        for k, path in sorted(items, key=lambda t: int(t[0])):
            with Image.open(path) as im:
                img = np.asarray(im.convert("L")) > 0
            if img.shape != depth_shape:
                raise SchemaError(f"{path}: mask shape {img.shape} differs from depth {depth_shape}")
            if not img.any():
                log.warning("%s: empty mask, skipped", path)
                continue
            mask = FruitMask.from_image(img)
            row = info.get((stem, k), {})
            fruits.append(AnnotatedFruit(
                f"{stem}/{k}", mask.box, _ripeness(row.get("ripeness"), default_ripeness),
                mask, _diameter(row.get("diameter_mm")),
            ))
        frames.append(Frame(stem, rgb_rel, depth_rel, intrinsics, tuple(fruits), None, out_dir))
    manifest = out_dir / "manifest.json"
    write_manifest(frames, manifest)
    return manifest
