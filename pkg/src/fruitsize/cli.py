"""``fruitsize`` command line.

Exit status: 0 on success, 1 when an input fails validation, 2 when
estimation failed for every fruit.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dataset import DetectionRecord, group_by_frame, load_detections, load_manifest, write_detections
from .errors import FruitSizeError, ManifestFileError, SchemaError
from .estimators2d import BoundingBox, HoughConfig
from .estimators3d import RansacConfig
from .filtering import DEFAULT_RETENTION_GRID, RetentionRange
from .geometry import CameraIntrinsics
from .metrics import detection_metrics, match_detections
from .sweep import (ALL_ESTIMATORS, Estimator, SweepConfig, fruits_from_detections, records_to_csv,
                    run_size_sweep, summarize, summary_to_json)
from .synthetic import SceneSpec, write_synthetic_dataset

log = logging.getLogger("fruitsize")

EXIT_OK, EXIT_INVALID, EXIT_ESTIMATION = 0, 1, 2


class UsageError(FruitSizeError):
    pass


# --- flag parsing ----------------------------------------------------------

def _estimators(text):
    by_name = {e.value.lower(): e for e in Estimator}
    out = []
    for name in text.split(","):
        key = name.strip().lower()
        if key not in by_name:
            raise argparse.ArgumentTypeError(
                f"unknown estimator {name!r}; choose from {', '.join(e.value for e in Estimator)}")
        out.append(by_name[key])
    return tuple(dict.fromkeys(out))


def _retention(text):
    try:
        return tuple(RetentionRange.parse(p.strip()) for p in text.split(","))
    except FruitSizeError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _pair(text):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    return lo, hi


def _shared_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("shared options")
    g.add_argument("--manifest", type=Path, help="manifest JSON")
    g.add_argument("--out", type=Path, help="output directory")
    g.add_argument("--estimators", type=_estimators, default=ALL_ESTIMATORS,
                   help="comma list, e.g. LSeg2D,RANSAC3D (default: all six)")
    g.add_argument("--retention", type=_retention, default=DEFAULT_RETENTION_GRID,
                   help="comma list of LO:HI percent pairs (default 0:100 ... 40:60 in 5%% steps)")
    g.add_argument("--ransac-delta", type=float, default=RansacConfig.delta, metavar="MM")
    g.add_argument("--ransac-iters", type=int, default=RansacConfig.max_iterations, metavar="N")
    g.add_argument("--ransac-threshold", type=float, default=RansacConfig.inlier_ratio_threshold, metavar="F")
    g.add_argument("--ransac-no-refit", action="store_true", help="report the raw 4-point sphere")
    g.add_argument("--hough-radius-frac", type=_pair, default=HoughConfig.radius_frac, metavar="LO:HI")
    g.add_argument("--iou-threshold", type=float, default=0.7, metavar="F")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--jobs", type=int, default=1)
    return p


def _intrinsics_flags(p):
    p.add_argument("--focal-length", type=float, required=True, help="pixels")
    p.add_argument("--principal-point", type=_pair, required=True, metavar="U0:V0")
    p.add_argument("--depth-scale", type=float, required=True, help="mm per depth unit")


def _intrinsics(args):
    return CameraIntrinsics(args.focal_length, args.principal_point, args.depth_scale)


def _need(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _sweep_config(args):
    if not 0 < args.iou_threshold < 1:
        raise UsageError("--iou-threshold must be in (0, 1)")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return SweepConfig(
        estimators=args.estimators,
        retention_grid=args.retention,
        hough=HoughConfig(radius_frac=args.hough_radius_frac),
        ransac=RansacConfig(args.ransac_delta, args.ransac_iters, args.ransac_threshold,
                            args.seed, not args.ransac_no_refit),
        seed=args.seed,
        use_fallback_segmenter=not args.no_fallback_segmenter,
    )


# --- subcommands -------------------------------------------------------------

def cmd_size_sweep(args):
    _need(args, "manifest", "out")
    config = _sweep_config(args)
    frames = load_manifest(args.manifest)
    if args.detections is not None:
        dets = group_by_frame(load_detections(args.detections, [f.frame_id for f in frames]))
        sized = []
        for frame in frames:
            fruits, match = fruits_from_detections(frame, dets.get(frame.frame_id, []),
                                                   args.iou_threshold, args.match)
            log.info("%s: %d matched, %d unmatched detections, %d missed fruits", frame.frame_id,
                     len(match.pairs), len(match.unmatched_detections), len(match.unmatched_ground_truths))
            sized.append(_with_fruits(frame, fruits))
        frames = sized
    records = run_size_sweep(frames, config, jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "size_errors.csv").write_text(records_to_csv(records), encoding="utf-8")
    summary = summarize(records, list(config.estimators), list(config.retention_grid))
    (args.out / "summary.json").write_text(summary_to_json(summary, records), encoding="utf-8")
    if args.svg:
        _write_svg(args.out / "summary.json", args.out / "boxplot.svg")
    n_ok = sum(r.status == "ok" for r in records)
    print(f"{len(records)} records ({n_ok} ok, {len(records) - n_ok} skipped) -> {args.out}")
    if records and n_ok == 0:
        log.error("estimation failed for every fruit")
        return EXIT_ESTIMATION
    return EXIT_OK


def _with_fruits(frame, fruits):
    from dataclasses import replace
    new = replace(frame, fruits=tuple(fruits))
    if "depth_raw" in frame.__dict__:
        new.__dict__["depth_raw"] = frame.__dict__["depth_raw"]
    return new


def cmd_detect_eval(args):
    _need(args, "manifest", "detections")
    frames = load_manifest(args.manifest)
    if not any(f.fruits for f in frames):
        raise UsageError("manifest has no ground-truth fruits")
    dets = load_detections(args.detections, [f.frame_id for f in frames])
    metrics = detection_metrics(dets, frames)
    by_frame = group_by_frame(dets)
    matched = unmatched_d = unmatched_g = 0
    for frame in frames:
        m = match_detections(by_frame.get(frame.frame_id, []), list(frame.fruits), args.iou_threshold, args.match)
        matched += len(m.pairs)
        unmatched_d += len(m.unmatched_detections)
        unmatched_g += len(m.unmatched_ground_truths)
    doc = {**metrics, "iou_threshold": args.iou_threshold, "matched": matched,
           "unmatched_detections": unmatched_d, "unmatched_ground_truths": unmatched_g}
    text = json.dumps(doc, indent=1) + "\n"
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "detection_metrics.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args):
    _need(args, "out")
    spec = SceneSpec(
        seed=args.seed, n_fruits=args.fruits, diameter_range=args.diameter_range,
        depth_range=args.depth_range, noise_sigma=args.noise, occlusion=args.occlusion,
        outlier_fraction=args.outlier_fraction,
    )
    manifest = write_synthetic_dataset(spec, args.frames, args.out)
    if args.with_detections:
        frames = load_manifest(manifest)
        rng = np.random.default_rng(args.seed)
        dets = []
        for frame in frames:
            h, w = frame.shape
            for fruit in frame.fruits:
                b = fruit.box
                j = rng.normal(0.0, args.det_jitter, 4) if args.det_jitter > 0 else np.zeros(4)
                u0 = float(np.clip(b.u_min + j[0], 0, w - 1))
                v0 = float(np.clip(b.v_min + j[1], 0, h - 1))
                u1 = float(np.clip(b.u_max + j[2], u0 + 1, w))
                v1 = float(np.clip(b.v_max + j[3], v0 + 1, h))
                dets.append(DetectionRecord(frame.frame_id, BoundingBox(u0, v0, u1, v1), fruit.ripeness,
                                            float(rng.uniform(0.5, 1.0))))
        write_detections(dets, args.out / "detections.json")
    print(manifest)
    return EXIT_OK


def cmd_import_openaccess(args):
    from .importers import import_openaccess
    _need(args, "out")
    manifest = import_openaccess(args.root, args.annotations, args.out, _intrinsics(args),
                                 rgb_dir=args.rgb_dir, depth_dir=args.depth_dir)
    print(manifest)
    return EXIT_OK


def cmd_import_amodal(args):
    from .importers import import_amodal
    _need(args, "out")
    manifest = import_amodal(args.root, args.table, args.out, _intrinsics(args),
                             rgb_dir=args.rgb_dir, depth_dir=args.depth_dir, mask_dir=args.mask_dir)
    print(manifest)
    return EXIT_OK


def _write_svg(summary_path, svg_path):
    from .plotting import boxplot_svg, load_summary
    try:
        boxplot_svg(load_summary(summary_path), svg_path)
    except ImportError:
        raise UsageError("SVG output needs matplotlib (pip install 'artifact[plot]')") from None


def cmd_boxplot_svg(args):
    summary = args.summary or (args.out / "summary.json" if args.out else None)
    if summary is None:
        raise UsageError("give --summary or --out")
    target = args.svg_out or summary.with_suffix(".svg")
    _write_svg(summary, target)
    print(target)
    return EXIT_OK


# --- entry point ---------------------------------------------------------------

def build_parser():
    shared = _shared_flags()
    parser = argparse.ArgumentParser(prog="fruitsize", description="Fruit diameter estimation from RGB-D frames.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("size-sweep", parents=[shared], help="per-fruit size errors across estimators and retention ranges")
    p.add_argument("--detections", type=Path, help="size fruits on matched detections instead of annotated boxes")
    p.add_argument("--match", choices=("greedy", "hungarian"), default="greedy")
    p.add_argument("--no-fallback-segmenter", action="store_true", help="skip fruits without a mask")
    p.add_argument("--svg", action="store_true", help="also write boxplot.svg")
    p.set_defaults(func=cmd_size_sweep)

    p = sub.add_parser("detect-eval", parents=[shared], help="mAP / mAR of a detection file")
    p.add_argument("--detections", type=Path)
    p.add_argument("--match", choices=("greedy", "hungarian"), default="greedy")
    p.set_defaults(func=cmd_detect_eval)

    p = sub.add_parser("synth", parents=[shared], help="render a synthetic dataset")
    p.add_argument("--frames", type=int, default=3)
    p.add_argument("--fruits", type=int, default=6, help="per frame")
    p.add_argument("--diameter-range", type=_pair, default=(40.0, 95.0), metavar="LO:HI")
    p.add_argument("--depth-range", type=_pair, default=(1000.0, 1500.0), metavar="LO:HI")
    p.add_argument("--noise", type=float, default=0.0, help="depth noise sigma, mm")
    p.add_argument("--occlusion", type=float, default=0.0)
    p.add_argument("--outlier-fraction", type=float, default=0.0)
    p.add_argument("--with-detections", action="store_true", help="also write detections.json")
    p.add_argument("--det-jitter", type=float, default=0.0, help="box corner noise, px")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("import-openaccess", parents=[shared], help="convert a VIA-annotated box dataset (best effort)")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--annotations", type=Path, required=True, help="VIA JSON")
    p.add_argument("--rgb-dir", default="rgb")
    p.add_argument("--depth-dir", default="depth")
    _intrinsics_flags(p)
    p.set_defaults(func=cmd_import_openaccess)

    p = sub.add_parser("import-amodal", parents=[shared], help="convert a modal-mask dataset (best effort)")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--table", type=Path, required=True, help="CSV image,fruit,diameter_mm,ripeness")
    p.add_argument("--rgb-dir", default="images")
    p.add_argument("--depth-dir", default="depth")
    p.add_argument("--mask-dir", default="modal_masks")
    _intrinsics_flags(p)
    p.set_defaults(func=cmd_import_amodal)

    p = sub.add_parser("boxplot-svg", parents=[shared], help="draw summary.json as an SVG box-plot grid")
    p.add_argument("--summary", type=Path)
    p.add_argument("--svg-out", type=Path)
    p.set_defaults(func=cmd_boxplot_svg)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SchemaError, ManifestFileError, UsageError, ValueError, OSError) as exc:
        print(f"fruitsize: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FruitSizeError as exc:
        print(f"fruitsize: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
