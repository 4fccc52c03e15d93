from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from fassmvs.cli import main
from fassmvs.io import read_pfm, write_pfm


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert main(["render", "--out", str(out), "--width", "160", "--height", "120"]) == 0
    return out


@pytest.fixture(scope="module")
def long_scene(tmp_path_factory):
    out = tmp_path_factory.mktemp("long")
    assert main(["render", "--out", str(out), "--scene", "two-plane", "--width", "120", "--height", "90", "--views", "9"]) == 0
    return out


def _estimate(scene, out, *extra):
    return main(["estimate", "--poses", str(scene / "poses.txt"), "--out", str(out), "--depth-range", "5:20", *extra])


def test_render_writes_views_and_ground_truth(scene_dir):
    names = sorted(p.name for p in scene_dir.iterdir())
    assert "poses.txt" in names and "view002.png" in names and "view002_gt_depth.pfm" in names
    assert np.all(read_pfm(scene_dir / "view002_gt_depth.pfm") == 10.0)


def test_estimate_default_flags(scene_dir, tmp_path, capsys):
    assert _estimate(scene_dir, tmp_path) == 0
    depth = read_pfm(tmp_path / "view002_depth.pfm")
    normals = read_pfm(tmp_path / "view002_normal.pfm")
    conf = read_pfm(tmp_path / "view002_conf.pfm")
    assert depth.shape == conf.shape == (120, 160) and normals.shape == (120, 160, 3)
    report = json.loads((tmp_path / "run_report.json").read_text())
    assert report["frames"][0]["reference"] == "view002.png"
    assert len(report["frames"][0]["levels"]) == 3

    assert main(["eval", "--est", str(tmp_path / "view002_depth.pfm"), "--gt", str(scene_dir / "view002_gt_depth.pfm")]) == 0
    kv = dict(line.split("=") for line in capsys.readouterr().out.split())
    assert float(kv["l1_rel"]) < 0.01
    assert float(kv["cpl@1.05"]) > 0.9


def test_viz_and_dog_filter(scene_dir, tmp_path):
    assert _estimate(scene_dir, tmp_path, "--viz", "--filter", "dog", "--pyramid-levels", "1") == 0
    for suffix in ("depth", "normal", "conf"):
        assert (tmp_path / f"view002_{suffix}.png").exists()


def test_even_bundle_size_is_a_usage_error(scene_dir, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        _estimate(scene_dir, tmp_path, "--bundle-size", "2")
    assert exc.value.code == 2
    assert "odd" in capsys.readouterr().err


def test_surface_normal_variant_needs_pyramid(scene_dir, tmp_path, capsys):
    assert _estimate(scene_dir, tmp_path, "--sgm", "pi-sn", "--pyramid-levels", "1") == 2
    assert "configuration error" in capsys.readouterr().err


def test_missing_pose_file(tmp_path, capsys):
    code = main(["estimate", "--poses", str(tmp_path / "nope.txt"), "--out", str(tmp_path), "--depth-range", "1:2"])
    assert code == 1
    assert "nope.txt" in capsys.readouterr().err


def test_missing_image(scene_dir, tmp_path, capsys):
    text = (scene_dir / "poses.txt").read_text().replace("view001.png", "gone.png")
    (tmp_path / "poses.txt").write_text(text)
    for name in ("view000.png", "view002.png", "view003.png", "view004.png"):
        (tmp_path / name).write_bytes((scene_dir / name).read_bytes())
    assert main(["estimate", "--poses", str(tmp_path / "poses.txt"), "--out", str(tmp_path / "o"), "--depth-range", "5:20"]) == 1
    assert "gone.png" in capsys.readouterr().err


def test_too_few_views(scene_dir, tmp_path):
    assert _estimate(scene_dir, tmp_path, "--bundle-size", "7") == 1


def test_geometric_filter_needs_enough_frames(scene_dir, tmp_path):
    assert _estimate(scene_dir, tmp_path, "--filter", "geom") == 2


def test_geometric_filter_on_sequence(long_scene, tmp_path):
    args = ["--depth-range", "8:20", "--pyramid-levels", "2"]
    poses = str(long_scene / "poses.txt")
    assert main(["estimate", "--poses", poses, "--out", str(tmp_path / "raw"), *args]) == 0
    assert main(["estimate", "--poses", poses, "--out", str(tmp_path / "geo"), "--filter", "geom", *args]) == 0
    report = json.loads((tmp_path / "geo" / "run_report.json").read_text())
    assert [f["reference"] for f in report["frames"]] == [f"view{k:03d}.png" for k in range(2, 7)]
    for k in range(2, 7):
        raw = read_pfm(tmp_path / "raw" / f"view{k:03d}_depth.pfm")
        geo = read_pfm(tmp_path / "geo" / f"view{k:03d}_depth.pfm")
        assert not np.any((geo > 0) & (raw == 0))
        np.testing.assert_array_equal(geo[geo > 0], raw[geo > 0])
        assert (geo > 0).mean() > 0.5


def test_eval_identical_maps(tmp_path, capsys):
    gt = np.linspace(1, 5, 12).reshape(3, 4)
    write_pfm(tmp_path / "a.pfm", gt)
    assert main(["eval", "--est", str(tmp_path / "a.pfm"), "--gt", str(tmp_path / "a.pfm"), "--theta", "1.01"]) == 0
    kv = dict(line.split("=") for line in capsys.readouterr().out.split())
    assert float(kv["l1_abs"]) == 0 and float(kv["l1_rel"]) == 0
    assert float(kv["acc@1.01"]) == float(kv["cpl@1.01"]) == float(kv["f@1.01"]) == 1.0


def test_eval_hand_case_json(tmp_path, capsys):
    write_pfm(tmp_path / "e.pfm", np.array([[10.0, 12.0, 13.0, 0.0]]))
    write_pfm(tmp_path / "g.pfm", np.full((1, 4), 10.0))
    write_pfm(tmp_path / "c.pfm", np.array([[0.9, 0.5, 0.1, 0.0]]))
    argv = ["eval", "--est", str(tmp_path / "e.pfm"), "--gt", str(tmp_path / "g.pfm"), "--conf", str(tmp_path / "c.pfm")]
    assert main(argv + ["--theta", "1.25", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["l1_abs"] == pytest.approx(5 / 3)
    assert data["thresholds"][0] == {"theta": 1.25, "acc": pytest.approx(2 / 3), "cpl": 0.5, "f": pytest.approx(4 / 7)}
    assert data["roc"][0]["error_rate"] == 0.0 and data["roc"][-1]["error_rate"] == pytest.approx(2 / 3)  # ranked at ratio 1.05


def test_eval_size_mismatch(tmp_path, capsys):
    write_pfm(tmp_path / "a.pfm", np.ones((3, 4)))
    write_pfm(tmp_path / "b.pfm", np.ones((4, 3)))
    assert main(["eval", "--est", str(tmp_path / "a.pfm"), "--gt", str(tmp_path / "b.pfm")]) == 1
    assert "ground truth is (4, 3)" in capsys.readouterr().err


def test_thread_env_variable_gives_identical_files(scene_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("FASSMVS_THREADS", "3")
    assert _estimate(scene_dir, tmp_path / "env", "--pyramid-levels", "2") == 0
    assert _estimate(scene_dir, tmp_path / "one", "--pyramid-levels", "2", "--threads", "1") == 0
    for name in ("view002_depth.pfm", "view002_normal.pfm", "view002_conf.pfm", "run_report.json"):
        assert (tmp_path / "env" / name).read_bytes() == (tmp_path / "one" / name).read_bytes()


def test_console_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fassmvs.cli", "eval", "--est", str(tmp_path / "x.pfm"), "--gt", str(tmp_path / "y.pfm")],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and "x.pfm" in proc.stderr
