import csv
import json

import numpy as np
import pytest
from PIL import Image

from fruitsize.cli import main
from fruitsize.dataset import load_manifest, rle_encode, write_depth_png


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data"
    assert main(["synth", "--out", str(out), "--frames", "2", "--fruits", "3", "--noise", "2", "--occlusion", "0.1",
                 "--seed", "5", "--with-detections", "--det-jitter", "1.5"]) == 0
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_synth_outputs(synth):
    frames = load_manifest(synth / "manifest.json")
    assert len(frames) == 2 and all(len(f.fruits) == 3 for f in frames)
    dets = json.loads((synth / "detections.json").read_text())
    assert len(dets) == 6


def test_size_sweep(synth, tmp_path, capsys):
    out = tmp_path / "o"
    rc = main(["size-sweep", "--manifest", str(synth / "manifest.json"), "--out", str(out),
               "--estimators", "lseg2d,RANSAC3D", "--retention", "10:90,20:80", "--ransac-iters", "200",
               "--ransac-delta", "2.5", "--hough-radius-frac", "0.3:0.7", "--seed", "3", "--svg"])
    assert rc == 0
    rows = read_csv(out / "size_errors.csv")
    assert len(rows) == 6 * 2 * 2
    assert {r["estimator"] for r in rows} == {"LSeg2D", "RANSAC3D"}
    assert {(r["retention_lo"], r["retention_hi"]) for r in rows} == {("0.1", "0.9"), ("0.2", "0.8")}
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["summaries"]) == 4
    assert (out / "boxplot.svg").read_text().lstrip().startswith("<?xml")
    assert "24 records" in capsys.readouterr().out


def test_size_sweep_on_detections(synth, tmp_path):
    out = tmp_path / "o"
    rc = main(["size-sweep", "--manifest", str(synth / "manifest.json"), "--out", str(out),
               "--detections", str(synth / "detections.json"), "--match", "hungarian", "--iou-threshold", "0.5",
               "--estimators", "LSeg2D", "--retention", "0:100"])
    assert rc == 0
    assert 1 <= len(read_csv(out / "size_errors.csv")) <= 6


def test_detect_eval(synth, tmp_path, capsys):
    rc = main(["detect-eval", "--manifest", str(synth / "manifest.json"),
               "--detections", str(synth / "detections.json"), "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "detection_metrics.json").read_text())
    assert doc["mAP50"] == 100.0 and doc["matched"] + doc["unmatched_detections"] == 6
    assert json.loads(capsys.readouterr().out) == doc


def test_boxplot_svg_is_stable(synth, tmp_path):
    out = tmp_path / "o"
    main(["size-sweep", "--manifest", str(synth / "manifest.json"), "--out", str(out), "--estimators", "LSeg2D,LSq3D"])
    assert main(["boxplot-svg", "--out", str(out), "--svg-out", str(tmp_path / "a.svg")]) == 0
    assert main(["boxplot-svg", "--summary", str(out / "summary.json"), "--svg-out", str(tmp_path / "b.svg")]) == 0
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


@pytest.mark.parametrize("argv", [
    ["size-sweep", "--manifest", "missing.json", "--out", "x"],
    ["size-sweep", "--out", "x"],
    ["detect-eval", "--manifest", "missing.json", "--detections", "d.json"],
    ["boxplot-svg"],
])
def test_validation_failures_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1


def test_bad_flag_values_exit_2_from_argparse():
    # argparse usage errors use its own status 2 via SystemExit
    with pytest.raises(SystemExit) as info:
        main(["size-sweep", "--estimators", "Caliper"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["size-sweep", "--retention", "90:10"])


def test_schema_failure_exit_1(synth, tmp_path):
    doc = json.loads((synth / "manifest.json").read_text())
    doc["frames"][0]["fruits"][0]["ripeness"] = "Overripe"
    bad = synth / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["size-sweep", "--manifest", str(bad), "--out", str(tmp_path)]) == 1
    dets = tmp_path / "d.json"
    dets.write_text(json.dumps([{"frame_id": "synth-0000", "box": [0, 0, 5, 5], "class": "Ripe", "score": 3}]))
    assert main(["detect-eval", "--manifest", str(synth / "manifest.json"), "--detections", str(dets)]) == 1


def test_all_fruits_failing_exit_2(tmp_path):
    depth = np.zeros((30, 30), np.uint16)  # no valid depth anywhere
    write_depth_png(tmp_path / "d.png", depth)
    Image.fromarray(np.zeros((30, 30, 3), np.uint8)).save(tmp_path / "c.png")
    m = np.zeros((30, 30), bool)
    m[10:20, 10:20] = True
    doc = {"schema_version": 1, "frames": [{
        "frame_id": "z", "rgb": "c.png", "depth": "d.png",
        "intrinsics": {"focal_length_px": 600, "principal_point": [14.5, 14.5], "depth_scale": 1},
        "fruits": [{"fruit_id": "z/0", "box": [10, 10, 20, 20], "ripeness": "Ripe", "gt_diameter_mm": 60,
                    "mask": {"rle": rle_encode(m)}}]}]}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    assert main(["size-sweep", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "o")]) == 2
    rows = read_csv(tmp_path / "o" / "size_errors.csv")
    assert len(rows) == 54 and all(r["status"] == "skip" for r in rows)
