"""Per-fruit size-error sweep over estimators and retention ranges."""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import AnnotatedFruit, fallback_segment
from .errors import FruitSizeError
from .estimators2d import FruitMask, HoughConfig, estimate_2d_bbox, estimate_2d_hough, estimate_2d_lseg
from .estimators3d import RansacConfig, estimate_3d_lseg, lsq_sphere_fit, ransac_sphere
from .filtering import DEFAULT_RETENTION_GRID, filter_by_depth_percentile, mean_depth
from .geometry import back_project, pixel_to_metric
from .metrics import match_detections
from .stats import quartile_summary

log = logging.getLogger(__name__)


class Estimator(str, enum.Enum):
    BBOX_2D = "BBox2D"
    LSEG_2D = "LSeg2D"
    HT_2D = "HT2D"
    LSEG_3D = "LSeg3D"
    LSQ_3D = "LSq3D"
    RANSAC_3D = "RANSAC3D"

    @property
    def is_2d(self):
        return self.value.endswith("2D")


ALL_ESTIMATORS = tuple(Estimator)
CSV_COLUMNS = ("fruit_id", "estimator", "retention_lo", "retention_hi",
               "d_est_mm", "d_gt_mm", "error_mm", "status", "skip_reason")


@dataclass(frozen=True)
class SizeErrorRecord:
    fruit_id: str
    estimator: Estimator
    retention: object  # RetentionRange
    d_est: float | None
    d_gt: float | None
    status: str = "ok"
    skip_reason: str = ""

    @property
    def error(self):
        if self.d_est is None or self.d_gt is None:
            return None
        return self.d_est - self.d_gt


@dataclass(frozen=True)
class SweepConfig:
    estimators: tuple = ALL_ESTIMATORS
    retention_grid: tuple = DEFAULT_RETENTION_GRID
    hough: HoughConfig = field(default_factory=HoughConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    seed: int = 0
    use_fallback_segmenter: bool = True


def fruit_seed(global_seed, frame_id, fruit_id):
    """Per-fruit RNG seed: ``global_seed XOR hash(frame_id/fruit_id)``, stable across processes."""
    digest = hashlib.blake2b(f"{frame_id}/{fruit_id}".encode(), digest_size=8).digest()
    return (global_seed & 0xFFFFFFFFFFFFFFFF) ^ int.from_bytes(digest, "little")


def _reason(exc):
    return f"{type(exc).__name__}: {exc}"


def _skip_all(fruit, config, reason):
    return [
        SizeErrorRecord(fruit.fruit_id, est, rng, None, fruit.gt_diameter_mm, "skip", reason)
        for est in config.estimators for rng in config.retention_grid
    ]


def evaluate_fruit(frame, fruit, config):
    """All (estimator, retention) records for one fruit, estimator-major."""
    if fruit.gt_diameter_mm is None:
        return _skip_all(fruit, config, "no ground-truth diameter")
    mask = fruit.mask
    if mask is None:
        if not config.use_fallback_segmenter:
            return _skip_all(fruit, config, "no mask")
        try:
            mask = fallback_segment(frame, fruit.box)
        except FruitSizeError as exc:
            return _skip_all(fruit, config, _reason(exc))

    depth = frame.depth_mm
    uv = mask.pixels
    z = depth[uv[:, 1], uv[:, 0]]
    valid = z > 0
    if not valid.any():
        return _skip_all(fruit, config, "no valid depth under mask")
    pixels = np.column_stack([uv[valid].astype(np.float64), z[valid]])
    intr = frame.intrinsics
    gt = fruit.gt_diameter_mm

    # pixel diameters do not depend on the retention range
    pixel_diam = {}
    for est, fn in ((Estimator.BBOX_2D, lambda: estimate_2d_bbox(fruit.box)),
                    (Estimator.LSEG_2D, lambda: estimate_2d_lseg(mask)),
                    (Estimator.HT_2D, lambda: estimate_2d_hough(mask, config.hough).diameter)):
        if est in config.estimators:
            try:
                pixel_diam[est] = fn()
            except FruitSizeError as exc:
                pixel_diam[est] = exc

    seed = fruit_seed(config.seed, frame.frame_id, fruit.fruit_id)
    ransac_cfg = RansacConfig(config.ransac.delta, config.ransac.max_iterations,
                              config.ransac.inlier_ratio_threshold, seed, config.ransac.refit)
    by_key = {}
    for rng in config.retention_grid:
        kept = filter_by_depth_percentile(pixels, rng)
        zbar = mean_depth(kept)
        cloud = back_project(kept, intr, fruit.fruit_id)
        for est in config.estimators:
            try:
                if est.is_2d:
                    dp = pixel_diam[est]
                    if isinstance(dp, Exception):
                        raise dp
                    d = pixel_to_metric(dp, zbar, intr)
                elif est is Estimator.LSEG_3D:
                    d = estimate_3d_lseg(cloud)
                elif est is Estimator.LSQ_3D:
                    d = lsq_sphere_fit(cloud).diameter
                else:
                    d = ransac_sphere(cloud, ransac_cfg).diameter
                rec = SizeErrorRecord(fruit.fruit_id, est, rng, float(d), gt)
            except FruitSizeError as exc:
                rec = SizeErrorRecord(fruit.fruit_id, est, rng, None, gt, "skip", _reason(exc))
            by_key[est, rng] = rec
    return [by_key[est, rng] for est in config.estimators for rng in config.retention_grid]


def _task(args):
    frame, index, config = args
    return evaluate_fruit(frame, frame.fruits[index], config)


def run_size_sweep(frames, config=SweepConfig(), jobs=1):
    """Evaluate every fruit of every frame; output order is manifest order,
    then estimator, then retention, regardless of ``jobs``."""
    tasks = [(frame, i, config) for frame in frames for i in range(len(frame.fruits))]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        chunks = [_task(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    skipped = sum(r.status != "ok" for r in records)
    if skipped:
        log.info("%d of %d records skipped", skipped, len(records))
    return records


def fruits_from_detections(frame, detections, threshold=0.7, method="greedy"):
    """Fruit list for sizing on detected boxes.

    Each detection matched to a ground-truth fruit keeps its own box and
    borrows that fruit's mask (clipped to the detection box) and diameter.
    """
    match = match_detections(detections, list(frame.fruits), threshold, method)
    out = []
    for det, gt, _ in match.pairs:
        mask = gt.mask
        if mask is not None:
            u, v, b = mask.pixels[:, 0], mask.pixels[:, 1], det.box
            inside = (u >= b.u_min) & (u + 1 <= b.u_max) & (v >= b.v_min) & (v + 1 <= b.v_max)
            mask = FruitMask(mask.pixels[inside]) if inside.any() else None
        out.append(AnnotatedFruit(gt.fruit_id, det.box, gt.ripeness, mask, gt.gt_diameter_mm))
    return out, match


# --- outputs -------------------------------------------------------------

def _fmt(x):
    return "" if x is None else repr(float(x))


def records_to_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([r.fruit_id, r.estimator.value, _fmt(r.retention.lower), _fmt(r.retention.upper),
                    _fmt(r.d_est), _fmt(r.d_gt), _fmt(r.error), r.status, r.skip_reason])
    return buf.getvalue()


def summarize(records, estimators=None, retention_grid=None):
    """Quartile summaries keyed by ``(estimator, retention)`` over successful records."""
    groups = {}
    for r in records:
        if r.status == "ok":
            groups.setdefault((r.estimator, r.retention), []).append(r.error)
    ests = estimators or list(dict.fromkeys(k[0] for k in groups))
    grid = retention_grid or list(dict.fromkeys(k[1] for k in groups))
    return {(e, g): quartile_summary(groups[e, g]) for e in ests for g in grid if (e, g) in groups}


def summary_to_json(summary, records):
    counts = {}
    for r in records:
        key = (r.estimator, r.retention)
        ok, skip = counts.get(key, (0, 0))
        counts[key] = (ok + (r.status == "ok"), skip + (r.status != "ok"))
    doc = {"schema_version": 1, "summaries": []}
    for (est, rng), qs in summary.items():
        doc["summaries"].append({
            "estimator": est.value, "retention_lo": rng.lower, "retention_hi": rng.upper,
            "n_skipped": counts.get((est, rng), (0, 0))[1], **qs.to_dict(),
        })
    return json.dumps(doc, indent=1) + "\n"
