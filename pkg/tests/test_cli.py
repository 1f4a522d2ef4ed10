import json

import numpy as np
import pytest

from mvwarp import io
from mvwarp.cli import main
from mvwarp.diffusion.checkpoint import save_checkpoint
from mvwarp.diffusion.model import GaussianInpaintPrior
from mvwarp.diffusion.schedule import linear_schedule
from mvwarp.pipeline import RunConfig, StageError, run_pipeline, sub_seed


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth-scene", "--seed", "1", "--out", str(root / "scene"), "--frames", "5", "--size", "32"]) == 0
    return root


@pytest.fixture(scope="module")
def dataset(workdir):
    out = workdir / "ds"
    args = ["build-dataset", "--input", str(workdir / "scene/frames"), "--depth", str(workdir / "scene/depth"),
            "--mode", "static", "--seed", "2", "--out", str(out), "--oracle", str(workdir / "scene/scene.json")]
    assert main(args) == 0
    return out


def test_synth_scene_outputs(workdir):
    frames = io.read_frames(workdir / "scene/frames")
    depths = io.read_depths(workdir / "scene/depth")
    assert frames.shape == (5, 32, 32, 3) and len(depths) == 5
    assert io.read_json(workdir / "scene/scene.json")["source"]["kind"] == "synthetic"


def test_warp_command(workdir, tmp_path):
    args = ["warp", "--input", str(workdir / "scene/frames"), "--depth", str(workdir / "scene/depth"),
            "--camera-type", "orbit_left", "--magnitude", "8", "--kind", "dynamic", "--out", str(tmp_path)]
    assert main(args) == 0
    frames = io.read_frames(tmp_path / "frames")
    masks = io.read_masks(tmp_path / "masks")
    np.testing.assert_array_equal(frames[0], io.read_frames(workdir / "scene/frames")[0])
    assert masks[0].all() and not masks[-1].all()
    assert len(io.read_json(tmp_path / "trajectory.json")["poses"]) == 5


def test_build_dataset_manifest(dataset):
    manifest = io.read_json(dataset / "manifest.json")
    assert manifest["mode"] == "static" and len(manifest["samples"]) == 13
    entry = manifest["samples"][1]
    for key in ("id", "camera_label", "magnitude", "frame_dir", "mask_dir", "num_frames", "width", "height", "poses"):
        assert key in entry
    assert (dataset / entry["frame_dir"] / "frame_00000.png").exists()
    assert io.read_json(dataset / "scene.json")["views"] == []


def test_downsample_masks_command(dataset, tmp_path):
    out = tmp_path / "m.lmask"
    assert main(["downsample-masks", "--in", str(dataset / "samples/03_orbit_right/masks"), "--out", str(out)]) == 0
    assert io.read_latent_mask(out).shape == (2, 4, 4)


def test_train_and_sample_commands(dataset, tmp_path, capsys):
    ckpt = tmp_path / "m.ravm"
    assert main(["train", "--dataset", str(dataset), "--out", str(ckpt), "--steps", "10", "--seed", "1"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["steps"] == 10
    out = tmp_path / "video"
    assert main(["sample", "--model", str(ckpt), "--dataset", str(dataset), "--seed", "3", "--out", str(out)]) == 0
    video = io.read_frames(out)
    assert video.shape == (5, 32, 32, 3)
    start = io.read_frames(dataset / "samples/original/frames")[0]
    np.testing.assert_array_equal(video[0], start)


@pytest.mark.parametrize("backend", ["ddpm", "flow"])
def test_inpaint_and_evaluate(dataset, tmp_path, backend, capsys):
    out = tmp_path / "inp"
    args = ["inpaint-multiview", "--dataset", str(dataset), "--model", "gaussian", "--S", "2",
            "--backend", backend, "--seed", "4", "--out", str(out), "--views", "3", "--steps", "10"]
    assert main(args) == 0
    report = io.read_json(out / "report.json")
    assert report["scorer_calls"] == 10 * 4 + 10 * 2 * 2
    assert len(report["steps"]) == 20
    capsys.readouterr()
    for metric in ("oracle", "sed", "tsed"):
        rep = tmp_path / f"{metric}.json"
        assert main(["eval-consistency", "--frames", str(out), "--oracle", str(out / "scene.json"),
                     "--metric", metric, "--report", str(rep)]) == 0
        doc = io.read_json(rep)
        assert doc["metric"] == metric and len(doc["views"]) == 3
    assert 0.0 <= io.read_json(tmp_path / "tsed.json")["tsed"] <= 1.0


def test_inpaint_with_prior_checkpoint(dataset, tmp_path):
    ckpt = tmp_path / "prior.ravm"
    save_checkpoint(ckpt, GaussianInpaintPrior(0.4, "eps", linear_schedule(8)))
    args = ["inpaint-multiview", "--dataset", str(dataset), "--model", str(ckpt), "--S", "2", "--seed", "0",
            "--out", str(tmp_path / "o"), "--views", "2", "--steps", "8"]
    assert main(args) == 0
    assert len(list((tmp_path / "o").glob("*.png"))) == 2


def test_failures_exit_nonzero_with_stage(tmp_path, capsys):
    assert main(["downsample-masks", "--in", str(tmp_path / "missing"), "--out", str(tmp_path / "x")]) != 0
    assert "error [downsample]" in capsys.readouterr().err
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mode": "static", "seed": 1, "out": "o", "scene": {"preset": "two_planes"},
                               "training": {"steps": 2, "bogus": 1},
                               "views": [{"camera_type": "orbit_left", "magnitude": 5}]}))
    assert main(["run", "--config", str(cfg)]) != 0
    assert "error [validate]" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["warp", "--camera-type", "spin"])


def test_run_config_validation(tmp_path):
    with pytest.raises(ValueError):
        RunConfig.from_dict({"mode": "static", "out": "x"})
    cfg = RunConfig(mode="static", seed=0, out=str(tmp_path), frames=str(tmp_path / "nope"), depths=None)
    with pytest.raises(StageError) as err:
        run_pipeline(cfg)
    assert err.value.stage == "validate"


def test_sub_seeds_differ():
    seeds = {sub_seed(7, s) for s in ("dataset", "train", "inpaint", "sample")}
    assert len(seeds) == 4


def small_run(tmp_path, mode, **extra):
    cfg = {"mode": mode, "seed": 5, "out": str(tmp_path / mode),
           "scene": {"preset": "two_planes", "width": 32, "height": 32, "num_frames": 5},
           "training": {"steps": 20, "hidden": 32}, "guidance": {"S": 2, "steps": 10}, **extra}
    return RunConfig.from_dict(cfg)


def test_dynamic_run_makes_six_videos(tmp_path):
    metrics = run_pipeline(small_run(tmp_path, "dynamic"))
    out = tmp_path / "dynamic"
    videos = sorted((out / "videos").iterdir())
    assert len(videos) == 6
    first = io.read_frames(out / "dataset/samples/original/frames")[0]
    for v in videos:
        np.testing.assert_array_equal(io.read_frames(v)[0], first)
    assert len(metrics["views"]) == 6 and all("oracle_score" in v for v in metrics["views"])
    assert 0.0 <= metrics["pairwise_tsed"] <= 1.0
    assert io.read_json(out / "train_config.json")["mode"] == "dynamic"


def test_static_run_starts_from_inpainted_views(tmp_path):
    views = [{"camera_type": "orbit_left", "magnitude": 6}, {"camera_type": "orbit_up", "magnitude": 8},
             {"camera_type": "dolly_out", "magnitude": 0.2}]
    metrics = run_pipeline(small_run(tmp_path, "static", views=views))
    out = tmp_path / "static"
    for i in range(3):
        start = io.read_rgb(out / f"inpainted/view_{i:02d}.png")
        np.testing.assert_array_equal(io.read_frames(out / f"videos/view_{i:02d}")[0], start)
    assert metrics["scorer_calls"] == 10 * 4 + 10 * 2 * 2
    assert len(metrics["pairwise_oracle"]) == 3 and "pairwise_tsed" in metrics
    report = io.read_json(out / "inpaint_report.json")
    assert all(s["selected_reward"] is None or s["selected_reward"] <= 0 for s in report["steps"])
    scene = out / "inpainted/scene.json"
    assert main(["eval-consistency", "--frames", str(out / "inpainted"), "--oracle", str(scene),
                 "--metric", "tsed"]) == 0


def test_run_from_files(tmp_path, workdir):
    cfg = {"mode": "static", "seed": 1, "out": "o", "frames": str(workdir / "scene/frames"),
           "depths": str(workdir / "scene/depth"), "training": {"steps": 5, "hidden": 32},
           "guidance": {"S": 2, "steps": 5}, "views": [{"camera_type": "orbit_right", "magnitude": 5},
                                                       {"camera_type": "dolly_in", "magnitude": 0.1}]}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(path)]) == 0
    metrics = io.read_json(tmp_path / "o/metrics.json")
    assert len(metrics["views"]) == 2


def test_same_config_same_metrics(tmp_path):
    a = run_pipeline(small_run(tmp_path / "a", "dynamic"))
    b = run_pipeline(small_run(tmp_path / "b", "dynamic"))
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_static_pipeline_runtime_bound(tmp_path):
    import time

    # desk-scale defaults take about 2.5 s on one core; bound pinned at twice that
    views = [{"camera_type": "orbit_left", "magnitude": 6}, {"camera_type": "orbit_left", "magnitude": 10},
             {"camera_type": "orbit_up", "magnitude": 8}, {"camera_type": "dolly_out", "magnitude": 0.2}]
    cfg = RunConfig.from_dict({"mode": "static", "seed": 7, "out": str(tmp_path), "scene": {"preset": "two_planes"},
                               "views": views})
    t0 = time.perf_counter()
    run_pipeline(cfg)
    assert time.perf_counter() - t0 < 5.0
