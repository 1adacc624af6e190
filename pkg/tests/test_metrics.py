import numpy as np
import pytest

from fruitsize.dataset import AnnotatedFruit, DetectionRecord, Frame, Ripeness
from fruitsize.estimators2d import BoundingBox
from fruitsize.geometry import CameraIntrinsics
from fruitsize.metrics import detection_metrics, iou, match_detections

from oracles import brute_ap

INTR = CameraIntrinsics(600.0)
R, U = Ripeness.RIPE, Ripeness.UNRIPE


def B(*c):
    return BoundingBox(*map(float, c))


def fruit(i, box, cls=R):
    return AnnotatedFruit(f"g{i}", box, cls)


def det(box, score, cls=R, frame="f"):
    return DetectionRecord(frame, box, cls, score)


def frame(fruits, fid="f"):
    return Frame(fid, "rgb.png", "depth.png", INTR, tuple(fruits))


def test_iou_examples():
    a = B(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, B(20, 20, 30, 30)) == 0.0
    assert iou(a, B(5, 0, 15, 10)) == pytest.approx(1 / 3, rel=1e-15)
    assert iou(a, B(10, 0, 20, 10)) == 0.0


def test_match_examples():
    g = [fruit(0, B(0, 0, 10, 10))]
    m = match_detections([det(B(0, 0, 10, 10), 0.9)], g, 0.7)
    assert len(m.pairs) == 1 and m.pairs[0][2] == 1.0
    low = det(B(0, 0, 10, 6), 0.9)  # IoU 0.6
    m = match_detections([low], g, 0.7)
    assert not m.pairs and m.unmatched_detections == [low] and m.unmatched_ground_truths == g
    hi, lo = det(B(0, 0, 10, 9), 0.8), det(B(0, 0, 10, 10), 0.5)
    m = match_detections([lo, hi], g, 0.7)
    assert m.pairs[0][0] is hi and m.unmatched_detections == [lo]
    assert match_detections([], [], 0.7).pairs == []


def test_match_threshold_is_strict():
    g = [fruit(0, B(0, 0, 10, 10))]
    d = det(B(0, 0, 10, 7), 0.9)  # IoU exactly 0.7
    assert not match_detections([d], g, 0.7).pairs


def test_hungarian_beats_greedy_on_crossed_pair():
    g0, g1 = fruit(0, B(0, 0, 10, 10)), fruit(1, B(4, 0, 14, 10))
    d1 = det(B(3, 0, 13, 10), 0.9)  # IoU 70/130 with g0, 90/110 with g1
    d2 = det(B(5, 0, 15, 10), 0.8)  # IoU 50/150 with g0, 90/110 with g1
    greedy = match_detections([d1, d2], [g0, g1], 0.5, "greedy")
    assert [(p[0], p[1]) for p in greedy.pairs] == [(d1, g1)]
    assert greedy.unmatched_detections == [d2] and greedy.unmatched_ground_truths == [g0]
    hung = match_detections([d1, d2], [g0, g1], 0.5, "hungarian")
    assert sorted((p[0].score, p[1].fruit_id) for p in hung.pairs) == [(0.8, "g1"), (0.9, "g0")]
    assert all(p[2] > 0.5 for p in hung.pairs)


def test_perfect_and_empty():
    gts = [fruit(0, B(0, 0, 10, 10)), fruit(1, B(30, 30, 50, 45), U), fruit(2, B(60, 0, 80, 20))]
    frames = [frame(gts)]
    perfect = [det(g.box, 1.0, g.ripeness) for g in gts]
    assert detection_metrics(perfect, frames) == {"mAP50": 100.0, "mAP75": 100.0, "mAP50:95": 100.0, "mAR": 100.0}
    assert detection_metrics([], frames) == {"mAP50": 0.0, "mAP75": 0.0, "mAP50:95": 0.0, "mAR": 0.0}


def test_handcrafted_five_by_seven():
    # five 10x10 ground truths in a row; seven detections, highest score first:
    #   d1 exact g1                              IoU 1
    #   d2 g2 shifted 1 px right                 IoU 90/110
    #   d3 duplicate of g1                       (g1 already taken)
    #   d4 nowhere                               0
    #   d5 g3 shifted 3 px right                 IoU 70/130
    #   d6 exact g4                              IoU 1
    #   d7 g5 shifted 2 px down                  IoU 80/120
    g = [fruit(i, B(20 * i, 0, 20 * i + 10, 10)) for i in range(5)]
    d = [det(B(0, 0, 10, 10), .95), det(B(21, 0, 31, 10), .90), det(B(0, 0, 10, 10), .85),
         det(B(200, 200, 210, 210), .80), det(B(43, 0, 53, 10), .70), det(B(60, 0, 70, 10), .60),
         det(B(80, 2, 90, 12), .50)]
    # TP pattern and resulting precision envelope / recall, per IoU threshold:
    #   0.50            T T F F T T T  recall .2 .4 .4 .4 .6 .8 1   envelope 1 1 5/7 ...
    #   0.55 .. 0.65    T T F F F T T  recall up to .8              envelope 1 1 4/7 ...
    #   0.70 .. 0.80    T T F F F T F  recall up to .6              envelope 1 1 2/3 .. 1/2
    #   0.85 .. 0.95    T F F F F T F  recall up to .4              envelope 1 .. 1/3
    # 101-point sampling: r in [0, .2] is 21 points, each later fifth is 20.
    ap50 = (21 + 20 + 60 * 5 / 7) / 101
    ap55 = (21 + 20 + 40 * 4 / 7) / 101
    ap70 = (21 + 20 + 20 * 1 / 2) / 101
    ap85 = (21 + 20 * 1 / 3) / 101
    ladder = [ap50] + [ap55] * 3 + [ap70] * 3 + [ap85] * 3
    recall = [1.0] + [0.8] * 3 + [0.6] * 3 + [0.4] * 3
    m = detection_metrics(d, [frame(g)])
    assert m["mAP50"] == pytest.approx(100 * ap50, abs=1e-9)
    assert m["mAP75"] == pytest.approx(100 * ap70, abs=1e-9)
    assert m["mAP50:95"] == pytest.approx(100 * sum(ladder) / 10, abs=1e-9)
    assert m["mAR"] == pytest.approx(100 * sum(recall) / 10, abs=1e-9)
    assert m["mAP75"] == pytest.approx(100 * 51 / 101, abs=1e-9)


def _random_instance(rng):
    frames, dets = [], []
    for k in range(int(rng.integers(1, 4))):
        fid = f"f{k}"
        gts = []
        for i in range(int(rng.integers(0, 5))):
            u, v = rng.uniform(0, 60, 2)
            gts.append(fruit(i, B(u, v, u + rng.uniform(5, 20), v + rng.uniform(5, 20)), R if rng.random() < .5 else U))
        frames.append(frame(gts, fid))
        for _ in range(int(rng.integers(0, 4))):
            if gts and rng.random() < 0.7:
                g = gts[int(rng.integers(len(gts)))]
                j = rng.normal(0, 2, 4)
                b = g.box
                box = B(b.u_min + j[0], b.v_min + j[1], max(b.u_min + j[0] + 1, b.u_max + j[2]),
                        max(b.v_min + j[1] + 1, b.v_max + j[3]))
                cls = g.ripeness if rng.random() < 0.8 else (U if g.ripeness is R else R)
            else:
                u, v = rng.uniform(0, 60, 2)
                box, cls = B(u, v, u + 10, v + 10), R if rng.random() < .5 else U
            dets.append(det(box, float(rng.random()), cls, fid))
    return frames, dets[:10]


def _brute_metrics(frames, dets):
    ladder = [round(0.5 + 0.05 * k, 2) for k in range(10)]
    ap, ar = {t: [] for t in ladder}, {t: [] for t in ladder}
    for cls in (R, U):
        data = {f.frame_id: ([g.box.as_list() for g in f.fruits if g.ripeness is cls],
                             [(d.score, d.box.as_list()) for d in dets if d.frame_id == f.frame_id and d.label is cls])
                for f in frames}
        for t in ladder:
            a, r = brute_ap(data, t)
            if a is not None:
                ap[t].append(a)
                ar[t].append(r)
    if not ap[0.5]:
        return None
    per = {t: sum(v) / len(v) for t, v in ap.items()}
    rec = {t: sum(v) / len(v) for t, v in ar.items()}
    return {"mAP50": 100 * per[0.5], "mAP75": 100 * per[0.75], "mAP50:95": 100 * sum(per.values()) / 10,
            "mAR": 100 * sum(rec.values()) / 10}


def test_matches_bruteforce_evaluator():
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 200:
        frames, dets = _random_instance(rng)
        want = _brute_metrics(frames, dets)
        if want is None:
            continue
        got = detection_metrics(dets, frames)
        for k in want:
            assert got[k] == pytest.approx(want[k], abs=1e-9), (k, frames, dets)
        checked += 1
