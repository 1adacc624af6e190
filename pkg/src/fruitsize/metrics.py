"""Box IoU, detection-to-ground-truth matching, and COCO-style AP/AR."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dataset import Ripeness

IOU_LADDER = tuple(np.round(np.arange(0.5, 0.951, 0.05), 2).tolist())
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
MAX_DETS = 100


def iou(a, b):
    iw = min(a.u_max, b.u_max) - max(a.u_min, b.u_min)
    ih = min(a.v_max, b.v_max) - max(a.v_min, b.v_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return float(inter / (a.area + b.area - inter))


def iou_matrix(boxes_a, boxes_b):
    out = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            out[i, j] = iou(a, b)
    return out


@dataclass
class MatchResult:
    pairs: list = field(default_factory=list)  # (detection, fruit, iou)
    unmatched_detections: list = field(default_factory=list)
    unmatched_ground_truths: list = field(default_factory=list)


def _score_order(dets):
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)  # stable on ties


def match_detections(dets, gts, threshold=0.7, method="greedy"):
    """Pair detections with ground-truth fruit when IoU exceeds ``threshold``.

    ``greedy``: detections in descending score order each take the
    unmatched ground truth of highest IoU. ``hungarian``: maximum total IoU
    over admissible pairs.
    """
    ious = iou_matrix([d.box for d in dets], [g.box for g in gts])
    det_taken, gt_taken = set(), set()
    result = MatchResult()
    if method == "greedy":
        for di in _score_order(dets):
            best, best_iou = None, threshold
            for gi in range(len(gts)):
                if gi not in gt_taken and ious[di, gi] > best_iou:
                    best, best_iou = gi, ious[di, gi]
            if best is not None:
                det_taken.add(di)
                gt_taken.add(best)
                result.pairs.append((dets[di], gts[best], float(best_iou)))
    elif method == "hungarian":
        if dets and gts:
            admissible = ious > threshold
            cost = np.where(admissible, -ious, 1.0)
            rows, cols = linear_sum_assignment(cost)
            for di, gi in sorted(zip(rows, cols), key=lambda p: (-dets[p[0]].score, p[0])):
                if admissible[di, gi]:
                    det_taken.add(di)
                    gt_taken.add(gi)
                    result.pairs.append((dets[di], gts[gi], float(ious[di, gi])))
    else:
        raise ValueError(f"unknown matching method {method!r}")
    result.unmatched_detections = [d for i, d in enumerate(dets) if i not in det_taken]
    result.unmatched_ground_truths = [g for i, g in enumerate(gts) if i not in gt_taken]
    return result


# --- COCO-style evaluation ----------------------------------------------

def _match_image(dets, gt_boxes, thr):
    """COCO per-image greedy matching: returns a TP flag per detection
    (already sorted by score). A match needs IoU >= thr."""
    ious = iou_matrix([d.box for d in dets], gt_boxes)
    taken = np.zeros(len(gt_boxes), dtype=bool)
    tp = np.zeros(len(dets), dtype=bool)
    for di in range(len(dets)):
        best, best_iou = -1, min(thr, 1 - 1e-10)
        for gi in range(len(gt_boxes)):
            if taken[gi] or ious[di, gi] < best_iou:
                continue
            best, best_iou = gi, ious[di, gi]
        if best >= 0:
            taken[best] = True
            tp[di] = True
    return tp


def _class_curve(dets_by_frame, gts_by_frame, thr):
    """Score-sorted TP flags over all frames plus the positive count."""
    scores, flags = [], []
    npos = sum(len(b) for b in gts_by_frame.values())
    for frame_id, dets in dets_by_frame.items():
        dets = [dets[i] for i in _score_order(dets)][:MAX_DETS]
        tp = _match_image(dets, gts_by_frame.get(frame_id, []), thr)
        scores.extend(d.score for d in dets)
        flags.extend(tp.tolist())
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="mergesort")
    return np.asarray(flags, dtype=bool)[order], npos


def average_precision(tp_flags, npos):
    """101-point interpolated AP and final recall of a score-sorted TP sequence."""
    if npos == 0:
        return None, None
    if len(tp_flags) == 0:
        return 0.0, 0.0
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(~tp_flags)
    recall = tp / npos
    precision = tp / (tp + fp)
    # precision envelope: non-increasing from the right
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    q = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(q.mean()), float(recall[-1])


def detection_metrics(detections, frames):
    """mAP50, mAP75, mAP50:95 and mAR@100 on a 0-100 scale.

    ``detections`` is a flat list of :class:`DetectionRecord`; ground
    truth comes from each frame's annotated fruit and ripeness labels.
    Per-class values are averaged over the classes that have ground truth.
    """
    out = {"mAP50": 0.0, "mAP75": 0.0, "mAP50:95": 0.0, "mAR": 0.0}
    ap = {thr: [] for thr in IOU_LADDER}
    ar = {thr: [] for thr in IOU_LADDER}
    for cls in Ripeness:
        gts = {fr.frame_id: [f.box for f in fr.fruits if f.ripeness == cls] for fr in frames}
        dets = {}
        for d in detections:
            if d.label == cls:
                dets.setdefault(d.frame_id, []).append(d)
        for thr in IOU_LADDER:
            flags, npos = _class_curve(dets, gts, thr)
            a, r = average_precision(flags, npos)
            if a is not None:
                ap[thr].append(a)
                ar[thr].append(r)
    if not ap[0.5]:
        return out
    per_thr_ap = {thr: float(np.mean(v)) for thr, v in ap.items()}
    per_thr_ar = {thr: float(np.mean(v)) for thr, v in ar.items()}
    out["mAP50"] = 100.0 * per_thr_ap[0.5]
    out["mAP75"] = 100.0 * per_thr_ap[0.75]
    out["mAP50:95"] = 100.0 * float(np.mean(list(per_thr_ap.values())))
    out["mAR"] = 100.0 * float(np.mean(list(per_thr_ar.values())))
    return out
