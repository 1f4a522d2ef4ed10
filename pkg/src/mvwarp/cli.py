"""Command-line entry points."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io

log = logging.getLogger("mvwarp")


def _intrinsics(frames, vfov):
    from .geometry import CameraIntrinsics

    H, W = frames.shape[1:3]
    return CameraIntrinsics.default(W, H, vfov)


def cmd_warp(args):
    from .geometry import make_dynamic_trajectory, make_static_trajectory, scene_center_depth
    from .warp_pipeline import warp_video

    video = io.read_frames(args.input)
    depths = io.read_depths(args.depth)
    K = _intrinsics(video, args.vfov)
    make = make_static_trajectory if args.kind == "static" else make_dynamic_trajectory
    traj = make(args.camera_type, args.magnitude, len(video), None, scene_center_depth(depths[0]))
    frames, masks = warp_video(video, depths, K, traj)
    out = Path(args.out)
    io.write_frames(out / "frames", frames)
    io.write_masks(out / "masks", masks)
    io.write_json(out / "trajectory.json", {"kind": traj.kind, "camera_type": traj.camera_type,
                                            "magnitude": traj.magnitude,
                                            "poses": [p.to_dict() for p in traj.poses]})


def cmd_build_dataset(args):
    from .consistency import SceneOracle
    from .warp_pipeline import build_training_set, save_training_set

    video = io.read_frames(args.input)
    depths = io.read_depths(args.depth)
    K = _intrinsics(video, args.vfov)
    ts = build_training_set(video, depths, K, args.mode, args.seed)
    save_training_set(ts, args.out)
    if args.oracle:
        doc = io.read_json(args.oracle)
    else:
        depth_file = sorted(Path(args.depth).resolve().glob("frame_*.depth"))[0]
        doc = SceneOracle.from_depth(depths[0], K, depth_file=str(depth_file)).to_dict()
    doc["views"] = []
    io.write_json(Path(args.out) / "scene.json", doc)
    print(f"wrote {len(ts)} samples to {args.out}")


def cmd_downsample_masks(args):
    from .latent_masks import downsample_mask

    lm = downsample_mask(io.read_masks(args.in_dir), args.anchor)
    io.write_latent_mask(args.out, lm)
    print(f"latent mask {lm.shape} -> {args.out}")


def cmd_train(args):
    import torch

    from .diffusion.checkpoint import save_checkpoint
    from .diffusion.train import TrainConfig, train
    from .warp_pipeline import load_training_set, num_workers

    torch.set_num_threads(num_workers())
    ts = load_training_set(args.dataset)
    overrides = io.read_json(args.config) if args.config else {}
    overrides.setdefault("mode", ts.mode)
    for key in ("steps", "rank", "seed"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    cfg = TrainConfig.from_dict(overrides)
    model, losses = train(ts, cfg)
    save_checkpoint(args.out, model, {"train_config": cfg.to_dict()})
    print(json.dumps({"first_loss": losses[0], "last_loss": losses[-1], "steps": len(losses)}))


def cmd_sample(args):
    from .diffusion.checkpoint import load_checkpoint
    from .diffusion.model import decode_video, encode_video, video_condition
    from .diffusion.sampling import sample_ddpm
    from .diffusion.schedule import linear_schedule
    from .warp_pipeline import load_training_set

    model, header = load_checkpoint(args.model)
    tcfg = header["extra"].get("train_config", {})
    mode = tcfg.get("mode", "static")
    ts = load_training_set(args.dataset)
    start = io.read_rgb(args.image) if args.image else ts.original.video[0]
    if mode == "dynamic" and not args.camera_type:
        raise ValueError("a dynamic-mode model needs --camera-type")
    cond = video_condition(encode_video(start[None])[0], args.camera_type, with_camera=(mode == "dynamic"))
    shape = tuple(model.latent_shape)
    z = sample_ddpm(model, cond, shape, linear_schedule(tcfg.get("T", 40)), args.seed)
    frames = io.to_uint8(decode_video(z))
    frames[0] = start
    io.write_frames(args.out, frames)


def _load_inpaint_model(spec: str, backend: str, steps: int, std: float):
    from .diffusion.checkpoint import load_checkpoint
    from .diffusion.model import GaussianInpaintPrior
    from .diffusion.schedule import linear_schedule

    if spec == "gaussian":
        objective = "eps" if backend == "ddpm" else "velocity"
        return GaussianInpaintPrior(std, objective, linear_schedule(steps) if backend == "ddpm" else None)
    model, _ = load_checkpoint(spec)
    return model


def cmd_inpaint_multiview(args):
    from .consistency import OracleScorer, SceneOracle
    from .guidance import GuidanceConfig, GuidanceTrace, InpaintTask, multiview_inpaint, trace_report
    from .warp_pipeline import load_training_set

    ts = load_training_set(args.dataset)
    oracle_path = Path(args.oracle) if args.oracle else Path(args.dataset) / "scene.json"
    oracle = SceneOracle.from_dict(io.read_json(oracle_path), oracle_path.parent)
    samples = [s for s in ts.samples if s.camera_label != "original"]
    if args.views:
        samples = samples[: args.views]
    tasks = [InpaintTask(io.to_float(s.video[0]), s.mask_video[0], s.poses[0], i) for i, s in enumerate(samples)]
    model = _load_inpaint_model(args.model, args.backend, args.steps, args.prior_std)
    config = GuidanceConfig(args.S, args.steps, args.backend, args.seed)
    scorer = OracleScorer(oracle)
    trace = GuidanceTrace()
    images = multiview_inpaint(tasks, model, config, scorer, trace)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    oracle.views.clear()
    for s, img in zip(samples, images):
        io.write_png(out / f"{s.sample_id}.png", img)
        oracle.add_view(s.sample_id, s.poses[0])
    doc = oracle.to_dict()
    for v in doc["views"]:
        v["image"] = f"{v['id']}.png"
    io.write_json(out / "scene.json", doc)
    io.write_json(out / "report.json", trace_report(trace, scorer.calls))


def cmd_eval_consistency(args):
    from .consistency import SceneOracle, fundamental_from_poses, oracle_matches, oracle_score, sed, tsed

    oracle_path = Path(args.oracle)
    doc = io.read_json(oracle_path)
    oracle = SceneOracle.from_dict(doc, oracle_path.parent)
    frames = Path(args.frames)
    images = {v["id"]: io.to_float(io.read_rgb(frames / v.get("image", f"{v['id']}.png"))) for v in doc["views"]}
    ids = list(images)
    pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1:]]
    report = {"metric": args.metric, "views": ids}
    if args.metric == "oracle":
        per = []
        for a, b in pairs:
            s = oracle_score(images[a], images[b], oracle, a, b)
            per.append({"a": a, "b": b, "score": s if np.isfinite(s) else None})
        finite = [p["score"] for p in per if p["score"] is not None]
        report.update(pairs=per, mean=float(np.mean(finite)) if finite else None)
    elif args.metric == "sed":
        per = []
        for a, b in pairs:
            xa, xb = oracle_matches(oracle, a, b, images[a], images[b])
            F = fundamental_from_poses(oracle.K, oracle.pose(a), oracle.pose(b))
            per.append({"a": a, "b": b, "matches": int(len(xa)), "sed": sed((xa, xb), F) if len(xa) else None})
        report.update(pairs=per)
    else:
        frame_pairs = [(images[a], a, images[b], b) for a, b in pairs]
        report.update(tsed=tsed(frame_pairs, oracle, args.Te, args.Tm), Te=args.Te, Tm=args.Tm)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)


def cmd_synth_scene(args):
    from .synthetic import build_spec, generate_synthetic_scene

    spec_arg = args.spec
    if Path(spec_arg).exists():
        spec_arg = io.read_json(spec_arg)
    else:
        spec_arg = {"preset": spec_arg}
        if args.size:
            spec_arg.update(width=args.size, height=args.size)
        if args.frames:
            spec_arg["num_frames"] = args.frames
    spec = build_spec(spec_arg, args.seed)
    frames, depths, oracle = generate_synthetic_scene(spec, args.seed)
    out = Path(args.out)
    io.write_frames(out / "frames", frames)
    io.write_depths(out / "depth", depths)
    io.write_json(out / "scene.json", oracle.to_dict())
    print(f"wrote {len(frames)} frames of {spec.width}x{spec.height} to {out}")


def cmd_run(args):
    from .pipeline import RunConfig, run_pipeline

    path = Path(args.config)
    cfg = RunConfig.from_dict(io.read_json(path), path.parent)
    if args.out:
        cfg.out = args.out
    metrics = run_pipeline(cfg)
    print(json.dumps(metrics, indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    from .geometry import CAMERA_TYPES

    p = argparse.ArgumentParser(prog="mvwarp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("warp", help="warp a video along one camera trajectory")
    s.add_argument("--input", required=True)
    s.add_argument("--depth", required=True)
    s.add_argument("--camera-type", required=True, choices=CAMERA_TYPES)
    s.add_argument("--magnitude", type=float, required=True)
    s.add_argument("--kind", choices=("static", "dynamic"), default="static")
    s.add_argument("--vfov", type=float, default=55.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_warp, stage="warp")

    s = sub.add_parser("build-dataset", help="build the warped-video training set")
    s.add_argument("--input", required=True)
    s.add_argument("--depth", required=True)
    s.add_argument("--mode", choices=("static", "dynamic"), required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--vfov", type=float, default=55.0)
    s.add_argument("--oracle", help="scene.json to copy as the dataset's geometry oracle")
    s.set_defaults(func=cmd_build_dataset, stage="dataset")

    s = sub.add_parser("downsample-masks", help="reduce a mask video to the latent grid")
    s.add_argument("--in", dest="in_dir", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--anchor", choices=("top_left", "center"), default="top_left")
    s.set_defaults(func=cmd_downsample_masks, stage="downsample")

    s = sub.add_parser("train", help="LoRA fine-tuning with the masked loss")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="training config JSON")
    s.add_argument("--steps", type=int)
    s.add_argument("--rank", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train, stage="train")

    s = sub.add_parser("sample", help="sample a video from a trained checkpoint")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--camera-type", choices=CAMERA_TYPES)
    s.add_argument("--image", help="start image (defaults to the original first frame)")
    s.set_defaults(func=cmd_sample, stage="sample")

    s = sub.add_parser("inpaint-multiview", help="consistency-guided inpainting of warped first frames")
    s.add_argument("--dataset", required=True)
    s.add_argument("--model", required=True, help="RAVM checkpoint, or 'gaussian' for the closed-form prior")
    s.add_argument("--S", type=int, default=8)
    s.add_argument("--backend", choices=("ddpm", "flow"), default="ddpm")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--views", type=int, help="inpaint only the first N warped views")
    s.add_argument("--oracle", help="scene.json (defaults to <dataset>/scene.json)")
    s.add_argument("--prior-std", type=float, default=0.5)
    s.set_defaults(func=cmd_inpaint_multiview, stage="inpaint")

    s = sub.add_parser("eval-consistency", help="oracle / SED / TSED report for a set of views")
    s.add_argument("--frames", required=True)
    s.add_argument("--oracle", required=True)
    s.add_argument("--metric", choices=("oracle", "sed", "tsed"), required=True)
    s.add_argument("--Te", type=float, default=1.25)
    s.add_argument("--Tm", type=int, default=10)
    s.add_argument("--report", help="also write the JSON report here")
    s.set_defaults(func=cmd_eval_consistency, stage="eval")

    s = sub.add_parser("synth-scene", help="render a synthetic scene with exact depth")
    s.add_argument("--spec", default="two_planes", help="preset name (two_planes, random) or spec JSON")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int)
    s.add_argument("--size", type=int)
    s.set_defaults(func=cmd_synth_scene, stage="synth")

    s = sub.add_parser("run", help="end-to-end pipeline from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="override the config's output directory")
    s.set_defaults(func=cmd_run, stage="run")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "steps", None) is None and args.command == "inpaint-multiview":
        args.steps = 40 if args.backend == "ddpm" else 50
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        stage = getattr(exc, "stage", args.stage)
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
