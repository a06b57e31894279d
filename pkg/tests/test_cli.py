import json
import subprocess
import sys

import numpy as np
import pytest

from slummap.fixtures import make_two_texture_scene, write_demo_scene
from slummap.raster import LabelMask, save_band_stack, save_label_mask


def run_cli(*args: str, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "slummap", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    config = write_demo_scene(root, size=48, window=5)
    return {"root": root, "config": config}


@pytest.fixture(scope="module")
def experiment_out(demo):
    out = demo["root"] / "exp"
    proc = run_cli("experiment", "--config", str(demo["config"]), "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    return out


def test_help_exits_zero():
    assert run_cli("--help").returncode == 0
    assert run_cli("experiment", "--help").returncode == 0


def test_unknown_flag_exits_two():
    assert run_cli("experiment", "--frobnicate").returncode == 2


def test_extract_glcm_counts_and_files(demo):
    out = demo["root"] / "feats"
    proc = run_cli("extract", "--config", str(demo["config"]), "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    assert "28 features" in proc.stdout
    assert (out / "two-texture_glcm_features.hdr").exists()
    assert (out / "two-texture_glcm_features.bin").exists()


def test_extract_spectral_feature_count(demo):
    out = demo["root"] / "feats_spectral"
    proc = run_cli(
        "extract",
        "--config",
        str(demo["config"]),
        "--technique",
        "spectral",
        "--out",
        str(out),
    )
    assert proc.returncode == 0, proc.stderr
    assert "10 features" in proc.stdout


def test_missing_mask_key_exits_two(tmp_path, demo):
    config = tmp_path / "bad.cfg"
    config.write_text(
        "[scene]\nlocation = x\nimage = {}\n".format(demo["root"] / "scene.hdr")
    )
    proc = run_cli("extract", "--config", str(config), "--out", str(tmp_path / "o"))
    assert proc.returncode == 2
    assert "mask" in proc.stderr


def test_missing_scene_file_exits_two(tmp_path):
    config = tmp_path / "gone.cfg"
    config.write_text(
        "[scene]\nlocation = x\nimage = /nonexistent/i.hdr\nmask = /nonexistent/m.hdr\n"
    )
    proc = run_cli("extract", "--config", str(config), "--out", str(tmp_path / "o"))
    assert proc.returncode == 2
    assert "not found" in proc.stderr


def test_experiment_outputs(experiment_out):
    report_csv = (experiment_out / "report.csv").read_text().splitlines()
    assert report_csv[0] == "location,technique,acc_slum,acc_non,iou_slum,iou_non,miou,seconds"
    assert len(report_csv) == 2
    assert report_csv[1].startswith("two-texture,glcm,")
    assert (experiment_out / "two-texture_glcm_map.pgm").exists()
    assert (experiment_out / "two-texture_glcm_model.json").exists()
    assert (experiment_out / "two-texture_glcm_timings.json").exists()
    assert (experiment_out / "config.used").exists()
    report = json.loads((experiment_out / "two-texture_glcm_report.json").read_text())
    assert report["location"] == "two-texture"
    assert report["feature_count"] == 28
    assert float(report["test_split"]["percent"]["miou"]) >= 90.0


def test_experiment_rerun_is_deterministic(demo, experiment_out):
    out2 = demo["root"] / "exp2"
    proc = run_cli("experiment", "--config", str(demo["config"]), "--out", str(out2))
    assert proc.returncode == 0, proc.stderr
    for name in (
        "two-texture_glcm_map.pgm",
        "two-texture_glcm_model.json",
        "two-texture_glcm_report.json",
    ):
        assert (out2 / name).read_bytes() == (experiment_out / name).read_bytes(), name
    # the csv is identical apart from the measured wall-clock column
    rows_a = (experiment_out / "report.csv").read_text().splitlines()
    rows_b = (out2 / "report.csv").read_text().splitlines()
    assert [r.rsplit(",", 1)[0] for r in rows_a] == [r.rsplit(",", 1)[0] for r in rows_b]


def test_experiment_rerun_from_config_echo(demo, experiment_out):
    echo = experiment_out / "config.used"
    out3 = demo["root"] / "exp3"
    proc = run_cli("experiment", "--config", str(echo), "--out", str(out3))
    assert proc.returncode == 0, proc.stderr
    assert (out3 / "two-texture_glcm_report.json").read_bytes() == (
        experiment_out / "two-texture_glcm_report.json"
    ).read_bytes()
    assert (out3 / "two-texture_glcm_map.pgm").read_bytes() == (
        experiment_out / "two-texture_glcm_map.pgm"
    ).read_bytes()


def test_two_city_batch_writes_two_rows(demo, tmp_path):
    config = tmp_path / "batch.cfg"
    config.write_text(
        "\n".join(
            [
                "[run]",
                "technique = spectral",
                f"out = {tmp_path / 'out'}",
                "[scene]",
                "location = city-a",
                f"image = {demo['root'] / 'scene.hdr'}",
                f"mask = {demo['root'] / 'mask.hdr'}",
                "[scene]",
                "location = city-b",
                f"image = {demo['root'] / 'scene.hdr'}",
                f"mask = {demo['root'] / 'mask.hdr'}",
            ]
        )
    )
    proc = run_cli("experiment", "--config", str(config))
    assert proc.returncode == 0, proc.stderr
    rows = (tmp_path / "out" / "report.csv").read_text().splitlines()
    assert len(rows) == 3
    assert rows[1].startswith("city-a,spectral,")
    assert rows[2].startswith("city-b,spectral,")


def test_predict_reproduces_experiment_map(demo, experiment_out, tmp_path):
    proc = run_cli(
        "predict",
        "--model",
        str(experiment_out / "two-texture_glcm_model.json"),
        "--image",
        str(demo["root"] / "scene.hdr"),
        "--out",
        str(tmp_path),
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "map.pgm").read_bytes() == (
        experiment_out / "two-texture_glcm_map.pgm"
    ).read_bytes()


def test_predict_wrong_technique_exits_five(demo, experiment_out, tmp_path):
    proc = run_cli(
        "predict",
        "--model",
        str(experiment_out / "two-texture_glcm_model.json"),
        "--image",
        str(demo["root"] / "scene.hdr"),
        "--technique",
        "spectral",
        "--out",
        str(tmp_path),
    )
    assert proc.returncode == 5
    assert "28" in proc.stderr and "10" in proc.stderr


def test_evaluate_matches_full_image_report(demo, experiment_out, tmp_path):
    proc = run_cli(
        "evaluate",
        "--pred",
        str(experiment_out / "two-texture_glcm_map.pgm"),
        "--truth",
        str(demo["root"] / "mask.hdr"),
        "--out",
        str(tmp_path),
        "--location",
        "two-texture",
    )
    assert proc.returncode == 0, proc.stderr
    standalone = json.loads((tmp_path / "report.json").read_text())
    from_experiment = json.loads(
        (experiment_out / "two-texture_glcm_report.json").read_text()
    )
    assert standalone == from_experiment["full_image"]


def test_single_class_scene_exits_four(tmp_path):
    stack, _ = make_two_texture_scene(size=48)
    save_band_stack(stack, tmp_path / "scene.hdr")
    save_label_mask(
        LabelMask(labels=np.zeros((48, 48), dtype=np.uint8)), tmp_path / "mask.hdr"
    )
    config = tmp_path / "deg.cfg"
    config.write_text(
        "\n".join(
            [
                "[run]",
                "technique = spectral",
                f"out = {tmp_path / 'out'}",
                "[scene]",
                "location = flat",
                f"image = {tmp_path / 'scene.hdr'}",
                f"mask = {tmp_path / 'mask.hdr'}",
            ]
        )
    )
    proc = run_cli("experiment", "--config", str(config))
    assert proc.returncode == 4
    assert "degenerate" in proc.stderr


def test_corrupt_scene_exits_three(demo, tmp_path):
    hdr = (demo["root"] / "scene.hdr").read_text()
    (tmp_path / "scene.hdr").write_text(hdr)
    (tmp_path / "scene.bin").write_bytes(b"\x00" * 10)  # truncated payload
    config = tmp_path / "bad.cfg"
    config.write_text(
        "\n".join(
            [
                "[run]",
                f"out = {tmp_path / 'out'}",
                "[scene]",
                "location = broken",
                f"image = {tmp_path / 'scene.hdr'}",
                f"mask = {demo['root'] / 'mask.hdr'}",
            ]
        )
    )
    proc = run_cli("experiment", "--config", str(config))
    assert proc.returncode == 3
    assert "i/o error" in proc.stderr


def test_unknown_config_key_exits_two(demo, tmp_path):
    config = tmp_path / "typo.cfg"
    config.write_text("[run]\ntechniqe = glcm\n")
    proc = run_cli("experiment", "--config", str(config))
    assert proc.returncode == 2
    assert "techniqe" in proc.stderr
