import json

import numpy as np
import pytest

from rgbd_perception import core_types as ct
from rgbd_perception.cli import evaluate_detections, main
from rgbd_perception.pipeline import (
    STAGES,
    ConfigError,
    MissingInputError,
    PipelineConfig,
    config_from_dict,
    config_to_dict,
    run_pipeline,
)
from rgbd_perception.synthetic import default_scene_spec, make_synthetic_scene

SMALL_SCENE = {
    "width": 80,
    "height": 60,
    "fx": 100.0,
    "fy": 100.0,
    "num_classes": 3,
    "background": {"depth": 1.4, "color": [96, 96, 104]},
    "shapes": [
        {"rect": [10, 15, 20, 22], "depth": 1.0, "color": [200, 40, 40], "class_id": 1},
        {"rect": [45, 10, 20, 30], "depth": 1.15, "color": [40, 170, 60], "class_id": 2},
    ],
    "sensors": [
        {"offset": [0.0, 0.0, 0.0], "noise": 0.002, "dropout": 0.15},
        {"offset": [0.0, 0.05, 0.0], "noise": 0.002, "dropout": 0.15},
        {"offset": [0.0, 0.0, 0.0], "noise": 0.01, "dropout": 0.3},
    ],
    "corrupt": {"sensor": 1, "columns": [30, 40], "offset": 0.08},
    "detections": {"jitter": 2, "false_positives": 1},
}

FAST = {"tgv": {"max_iters": 150, "check_every": 50, "data_scale": 1000.0}}


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    gt = make_synthetic_scene(SMALL_SCENE, d, seed=1)
    return d, gt


def files_of(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "summary.json"}


def test_synth_writes_expected_files(scene):
    d, gt = scene
    names = {p.name for p in d.iterdir()}
    for n in ("camera.json", "rgb.png", "detections.json", "gt_labels.png", "gt_boxes.json",
              "gt_depth.pfm", "scene.json", "seg_c0.pfm", "seg_c2.pfm"):
        assert n in names
    for i in range(3):
        assert f"depth_{i}.png" in names and f"camera_{i}.json" in names
    assert set(np.unique(gt["labels"])) == {0, 1, 2}


def test_synth_is_seeded(tmp_path):
    make_synthetic_scene(SMALL_SCENE, tmp_path / "a", seed=5)
    make_synthetic_scene(SMALL_SCENE, tmp_path / "b", seed=5)
    make_synthetic_scene(SMALL_SCENE, tmp_path / "c", seed=6)
    assert files_of(tmp_path / "a") == files_of(tmp_path / "b")
    assert files_of(tmp_path / "a")["depth_0.png"] != files_of(tmp_path / "c")["depth_0.png"]


def test_single_box_gives_two_classes(tmp_path):
    spec = dict(SMALL_SCENE, shapes=SMALL_SCENE["shapes"][:1])
    gt = make_synthetic_scene(spec, tmp_path, seed=0)
    assert set(np.unique(gt["labels"])) == {0, 1}
    assert gt["boxes"] == [{"class_id": 1, "bbox": [10, 15, 20, 22]}]


def test_synth_rejects_empty_spec(tmp_path):
    with pytest.raises(ValueError):
        make_synthetic_scene(dict(SMALL_SCENE, shapes=[]), tmp_path)


@pytest.fixture(scope="module")
def full_run(scene, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    summary = run_pipeline(scene[0], out, config_from_dict(FAST))
    return out, summary


def test_pipeline_stage_order_and_artifacts(full_run):
    out, summary = full_run
    assert [s["name"] for s in summary["stages"]] == list(STAGES)
    assert all(s["enabled"] for s in summary["stages"])
    for n in ("fused_depth.png", "fused_weight.pfm", "dense_depth.png", "energy_trace.csv", "hha.png",
              "proposals.json", "regions.png", "combined_c0.pfm", "labels.png", "summary.json"):
        assert (out / n).is_file(), n
    on_disk = json.loads((out / "summary.json").read_text())
    assert on_disk["stages"][2]["outputs"]["dense_depth.png"] == summary["stages"][2]["outputs"]["dense_depth.png"]
    assert (out / "energy_trace.csv").read_text().splitlines()[0] == "iteration,energy"


def test_pipeline_outputs_are_sensible(scene, full_run):
    d, gt = scene
    out, _ = full_run
    dense = ct.load_depth(out / "dense_depth.png")
    assert dense.valid.all()
    assert np.median(np.abs(dense.values - gt["depth"])) < 0.01
    labels = ct.load_labels(out / "labels.png", 3).values
    assert (labels == gt["labels"]).mean() > 0.9


def test_pipeline_is_byte_deterministic(scene, full_run, tmp_path):
    out, _ = full_run
    run_pipeline(scene[0], tmp_path, config_from_dict(FAST))
    assert files_of(tmp_path) == files_of(out)


def test_disabling_a_stage_keeps_prior_outputs(scene, full_run, tmp_path):
    out, _ = full_run
    cfg = config_from_dict(dict(FAST, stages={"hha": False, "propose": False, "combine": False, "argmax": False}))
    summary = run_pipeline(scene[0], tmp_path, cfg)
    assert [s["enabled"] for s in summary["stages"]] == [True, True, True, False, False, False, False]
    got = files_of(tmp_path)
    assert "hha.png" not in got and "labels.png" not in got
    full = files_of(out)
    for name, data in got.items():
        assert full[name] == data, name


def test_missing_segmentation_names_combine(scene, tmp_path):
    d, _ = scene
    partial = tmp_path / "scene"
    partial.mkdir()
    for p in d.iterdir():
        if not p.name.startswith("seg_"):
            (partial / p.name).write_bytes(p.read_bytes())
    cfg = config_from_dict(dict(FAST, stages={"densify": False, "hha": False, "propose": False}))
    with pytest.raises(MissingInputError) as err:
        run_pipeline(partial, tmp_path / "out", cfg)
    assert err.value.stage == "combine"
    assert "seg_c0.pfm" in str(err.value)


def test_config_round_trip_and_errors():
    cfg = config_from_dict({"tgv": {"alpha0": 3.0}, "render_mode": "box"})
    assert cfg.tgv.alpha0 == 3.0 and cfg.render_mode == "box"
    assert config_to_dict(config_from_dict(config_to_dict(cfg))) == config_to_dict(cfg)
    assert PipelineConfig().tgv.data_scale == 1000.0
    for bad in ({"bogus": 1}, {"tgv": {"nope": 1}}, {"stages": {"fly": True}}, {"tgv": {"alpha0": -1}}):
        with pytest.raises(ConfigError):
            config_from_dict(bad)


# ---------------------------------------------------------------------------
# CLI


def test_cli_synth_and_pipeline(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SMALL_SCENE))
    cfgf = tmp_path / "cfg.json"
    cfgf.write_text(json.dumps(FAST))
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "s"), "--seed", "2"]) == 0
    assert main(["pipeline", "--scene", str(tmp_path / "s"), "--out", str(tmp_path / "o"),
                 "--config", str(cfgf), "--threads", "4"]) == 0
    assert (tmp_path / "o" / "labels.png").is_file()


def test_cli_global_flags_before_subcommand(scene, tmp_path):
    d, _ = scene
    rc = main(["--out", str(tmp_path), "fuse", "--depth", str(d / "depth_0.png"), str(d / "depth_1.png"),
               "--camera", str(d / "camera_0.json"), str(d / "camera_1.json"), "--alphas", "1", "1"])
    assert rc == 0
    assert (tmp_path / "fused_weight.pfm").is_file()


def test_cli_stage_commands(scene, tmp_path):
    d, _ = scene
    o = str(tmp_path)
    assert main(["fuse", "--out", o, "--depth", *(str(d / f"depth_{i}.png") for i in range(3)),
                 "--camera", *(str(d / f"camera_{i}.json") for i in range(3))]) == 0
    cfgf = tmp_path / "cfg.json"
    cfgf.write_text(json.dumps(FAST))
    assert main(["densify", "--out", o, "--config", str(cfgf), "--depth", f"{o}/fused_depth.png",
                 "--weight", f"{o}/fused_weight.pfm", "--rgb", str(d / "rgb.png")]) == 0
    assert main(["hha", "--out", o, "--depth", f"{o}/dense_depth.png", "--camera", str(d / "camera.json")]) == 0
    assert main(["propose", "--out", o, "--rgb", str(d / "rgb.png"), "--depth", f"{o}/dense_depth.png",
                 "--camera", str(d / "camera.json"), "--regions"]) == 0
    assert main(["combine", "--out", o, "--detections", str(d / "detections.json"),
                 "--seg", str(d / "seg.pfm"), "--mode", "box"]) == 0
    for n in ("dense_depth.png", "energy_trace.csv", "hha.png", "proposals.json", "regions.png", "labels.png"):
        assert (tmp_path / n).is_file(), n


def test_cli_evaluate(scene, tmp_path):
    d, _ = scene
    o = str(tmp_path)
    assert main(["evaluate-detections", "--out", o, "--pred", str(d / "detections.json"),
                 "--gt", str(d / "gt_boxes.json")]) == 0
    m = json.loads((tmp_path / "detection_metrics.json").read_text())
    assert m["map_informed"] >= m["map_uninformed"]
    assert main(["evaluate-segmentation", "--out", o, "--pred", str(d / "gt_labels.png"),
                 "--gt", str(d / "gt_labels.png"), "--num-classes", "3"]) == 0
    s = json.loads((tmp_path / "segmentation_metrics.json").read_text())
    assert s["mean_f1"] == 1.0


def test_evaluate_detections_helper():
    gt = {"a": {"boxes": [{"class_id": 0, "bbox": [0, 0, 10, 10]}], "candidate_classes": [0]}}
    pred = {"a": [{"class_id": 0, "confidence": 0.9, "bbox": [50, 50, 10, 10]},
                  {"class_id": 0, "confidence": 0.4, "bbox": [0, 0, 10, 10]}]}
    metrics, table = evaluate_detections(pred, gt)
    assert metrics["map_uninformed"] == 0.5
    assert "mean" in table


def test_cli_split(tmp_path):
    idx = tmp_path / "index.json"
    idx.write_text(json.dumps({f"s{i}": [i % 2, 7] for i in range(6)}))
    assert main(["split", "--index", str(idx), "--k", "3", "--out", str(tmp_path), "--seed", "1"]) == 0
    folds = json.loads((tmp_path / "folds.json").read_text())
    assert sorted(folds) == [f"s{i}" for i in range(6)]
    assert sorted(np.bincount(list(folds.values()))) == [2, 2, 2]


def test_cli_exit_codes(scene, tmp_path):
    d, _ = scene
    assert main(["hha", "--out", str(tmp_path), "--depth", str(tmp_path / "nope.png"),
                 "--camera", str(d / "camera.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"unknown_key": 1}))
    assert main(["pipeline", "--scene", str(d), "--out", str(tmp_path), "--config", str(bad)]) == 3
    idx = tmp_path / "index.json"
    idx.write_text(json.dumps({"a": [1], "b": [2]}))
    assert main(["split", "--index", str(idx), "--k", "5", "--out", str(tmp_path)]) == 2
    assert main(["fuse", "--out", str(tmp_path), "--depth", str(d / "depth_0.png"),
                 "--camera", str(d / "camera_0.json"), str(d / "camera_1.json")]) == 2
    with pytest.raises(SystemExit):
        main(["no-such-command"])


def test_default_scene_matches_acceptance_setup():
    spec = default_scene_spec()
    assert (spec["width"], spec["height"]) == (320, 240)
    assert len(spec["sensors"]) == 3 and spec["corrupt"]["sensor"] == 1
