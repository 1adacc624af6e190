import copy
import json
import shutil

import numpy as np
import pytest

from fruitsize.dataset import (DetectionRecord, Frame, Ripeness, fallback_segment, load_detections, load_manifest,
                               rle_decode, rle_encode, write_depth_png, write_detections, write_manifest)
from fruitsize.errors import EmptyMaskError, ManifestFileError, ReferentialError, SchemaError
from fruitsize.estimators2d import BoundingBox
from fruitsize.geometry import CameraIntrinsics
from fruitsize.synthetic import SceneSpec, generate_synthetic_scene, write_synthetic_dataset


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    manifest = write_synthetic_dataset(SceneSpec(seed=11, n_fruits=4, noise_sigma=2.0, occlusion=0.2), 3, out)
    return manifest


def test_empty_manifest(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"schema_version": 1, "frames": []}))
    assert load_manifest(p) == []


def test_round_trip(dataset, tmp_path):
    frames = load_manifest(dataset)
    assert len(frames) == 3 and all(len(f.fruits) == 4 for f in frames)
    for sub in ("rgb", "depth"):
        shutil.copytree(dataset.parent / sub, tmp_path / sub)
    write_manifest(frames, tmp_path / "again.json")
    again = load_manifest(tmp_path / "again.json")
    assert again == frames
    for a, b in zip(frames, again):
        assert np.array_equal(a.depth_raw, b.depth_raw)
        for fa, fb in zip(a.fruits, b.fruits):
            assert fa.mask == fb.mask and fa.gt_diameter_mm == fb.gt_diameter_mm


def test_missing_depth_names_path(dataset):
    doc = json.loads(dataset.read_text())
    doc["frames"][1]["depth"] = "depth/nope.png"
    p = dataset.parent / "missing.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ManifestFileError) as info:
        load_manifest(p)
    assert "nope.png" in str(info.value) and info.value.frame_id == doc["frames"][1]["frame_id"]


def _mutations(doc, root):
    f0 = doc["frames"][0]
    fruit = f0["fruits"][0]

    def setter(path, value):
        def apply(d):
            obj = d
            for k in path[:-1]:
                obj = obj[k]
            if value is KeyError:
                del obj[path[-1]]
            else:
                obj[path[-1]] = value
        return apply

    fr = ["frames", 0]
    fu = fr + ["fruits", 0]
    yield "schema version", setter(["schema_version"], 2)
    yield "frames not list", setter(["frames"], {})
    yield "missing intrinsics", setter(fr + ["intrinsics"], KeyError)
    yield "zero focal", setter(fr + ["intrinsics", "focal_length_px"], 0)
    yield "bad principal point", setter(fr + ["intrinsics", "principal_point"], [1.0])
    yield "bad date", setter(fr + ["capture_date"], "14/09/2022")
    yield "duplicate frame", lambda d: d["frames"].append(copy.deepcopy(d["frames"][0]))
    yield "duplicate fruit", lambda d: d["frames"][0]["fruits"].append(copy.deepcopy(fruit))
    yield "degenerate box", setter(fu + ["box"], [5, 5, 5, 9])
    yield "box outside image", setter(fu + ["box"], [800, 400, 900, 470])
    yield "box wrong arity", setter(fu + ["box"], [1, 2, 3])
    yield "ripeness", setter(fu + ["ripeness"], "Intermediate")
    yield "gt negative", setter(fu + ["gt_diameter_mm"], -3.0)
    yield "gt absurd", setter(fu + ["gt_diameter_mm"], 400.0)
    yield "gt string", setter(fu + ["gt_diameter_mm"], "76")
    yield "rle short", setter(fu + ["mask"], {"rle": "10 5"})
    yield "rle junk", setter(fu + ["mask"], {"rle": "a b"})
    yield "rle negative", setter(fu + ["mask"], {"rle": "-5 " + str(848 * 480 + 5)})
    yield "mask empty", setter(fu + ["mask"], {"rle": str(848 * 480)})
    yield "mask both keys", setter(fu + ["mask"], {"rle": "1", "path": "x"})
    yield "mask outside box", setter(fu + ["box"], [b + d for b, d in zip(fruit["box"], (3, 3, 0, 0))])
    yield "fruit id type", setter(fu + ["fruit_id"], 7)
    yield "rgb resolution", setter(fr + ["rgb"], "small.png")


def test_mutated_manifests_rejected(dataset, tmp_path):
    for sub in ("rgb", "depth"):
        shutil.copytree(dataset.parent / sub, tmp_path / sub)
    from PIL import Image
    Image.fromarray(np.zeros((10, 10, 3), dtype=np.uint8)).save(tmp_path / "small.png")
    base = json.loads(dataset.read_text())
    names = []
    for name, mutate in _mutations(base, tmp_path):
        doc = copy.deepcopy(base)
        mutate(doc)
        p = tmp_path / "m.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            load_manifest(p)
        names.append(name)
    assert len(names) == 23


def test_gt_outside_usual_range_warns(dataset, tmp_path):
    for sub in ("rgb", "depth"):
        shutil.copytree(dataset.parent / sub, tmp_path / sub)
    doc = json.loads(dataset.read_text())
    doc["frames"][0]["fruits"][0]["gt_diameter_mm"] = 150.0
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.warns(UserWarning, match="usual"):
        load_manifest(tmp_path / "m.json")


def test_mask_from_image_path(tmp_path):
    depth = np.full((20, 30), 20000, dtype=np.uint16)
    write_depth_png(tmp_path / "d.png", depth)
    from PIL import Image
    Image.fromarray(np.zeros((20, 30, 3), np.uint8)).save(tmp_path / "c.png")
    m = np.zeros((20, 30), np.uint8)
    m[5:9, 10:14] = 255
    Image.fromarray(m).save(tmp_path / "m.png")
    doc = {"schema_version": 1, "frames": [{
        "frame_id": "a", "rgb": "c.png", "depth": "d.png",
        "intrinsics": {"focal_length_px": 600, "principal_point": [14.5, 9.5], "depth_scale": 0.05},
        "fruits": [{"fruit_id": "a/0", "box": [10, 5, 14, 9], "ripeness": "Unripe", "mask": {"path": "m.png"}}]}]}
    (tmp_path / "x.json").write_text(json.dumps(doc))
    (frame,) = load_manifest(tmp_path / "x.json")
    assert len(frame.fruits[0].mask) == 16
    assert frame.fruits[0].gt_diameter_mm is None
    assert frame.depth_mm[0, 0] == 1000.0


def test_rle_round_trip(rng):
    for _ in range(50):
        img = rng.random((13, 17)) < rng.random()
        assert np.array_equal(rle_decode(rle_encode(img), img.shape), img)
    assert rle_encode(np.ones((2, 2), bool)) == "0 4"


def test_detections(dataset, tmp_path):
    frames = load_manifest(dataset)
    ids = [f.frame_id for f in frames]
    p = tmp_path / "d.json"
    p.write_text("")
    assert load_detections(p) == []
    rng = np.random.default_rng(0)
    recs = []
    for k in range(100):
        u, v = rng.uniform(0, 700), rng.uniform(0, 400)
        recs.append(DetectionRecord(ids[k % 3], BoundingBox(u, v, u + rng.uniform(1, 90), v + rng.uniform(1, 60)),
                                    Ripeness.RIPE if k % 2 else Ripeness.UNRIPE, float(rng.random())))
    write_detections(recs, p)
    assert load_detections(p, ids) == recs
    doc = json.loads(p.read_text())
    doc[3]["score"] = 1.2
    p.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        load_detections(p)
    doc[3]["score"] = 0.5
    doc[4]["frame_id"] = "elsewhere"
    p.write_text(json.dumps(doc))
    with pytest.raises(ReferentialError):
        load_detections(p, ids)
    doc[4]["frame_id"] = ids[0]
    doc[5]["class"] = "ripe apple"
    p.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        load_detections(p, ids)


def test_fallback_segment_exact_on_sphere(tmp_path):
    scene = generate_synthetic_scene(SceneSpec(seed=4, n_fruits=1), tmp_path)
    fruit = scene.frame.fruits[0]
    assert fallback_segment(scene.frame, fruit.box) == fruit.mask


def _flat_frame(tmp_path, depth):
    write_depth_png(tmp_path / "d.png", depth)
    return Frame("f", "c.png", "d.png", CameraIntrinsics(600.0, (10.0, 10.0), 1.0), (), None, tmp_path)


def test_fallback_segment_flat_and_invalid(tmp_path):
    depth = np.full((20, 20), 900, np.uint16)
    depth[:, 10:] = 0
    frame = _flat_frame(tmp_path, depth)
    mask = fallback_segment(frame, BoundingBox(2, 3, 8, 9))
    assert len(mask) == 36 and mask.box.as_list() == [2, 3, 8, 9]
    with pytest.raises(EmptyMaskError):
        fallback_segment(frame, BoundingBox(11, 2, 18, 9))


def test_fallback_segment_is_connected_subset(rng, tmp_path):
    from scipy import ndimage
    depth = rng.integers(800, 1100, (40, 40)).astype(np.uint16)
    depth[rng.random((40, 40)) < 0.2] = 0
    frame = _flat_frame(tmp_path, depth)
    box = BoundingBox(3, 4, 35, 30)
    mask = fallback_segment(frame, box)
    assert box.contains_pixels(mask.pixels)
    _, n = ndimage.label(mask.to_image((40, 40)))
    assert n == 1
