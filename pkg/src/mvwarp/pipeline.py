"""End-to-end runs: dataset -> LoRA training -> (multi-view inpainting) -> video sampling -> metrics."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch

from . import io
from .consistency import OracleScorer, SceneOracle, oracle_score, tsed
from .diffusion.checkpoint import save_checkpoint
from .diffusion.model import GaussianInpaintPrior, decode_video, encode_video, video_condition
from .diffusion.sampling import sample_ddpm
from .diffusion.schedule import linear_schedule
from .diffusion.train import TrainConfig, evaluation_loss, prepare_sample, train
from .geometry import CAMERA_TYPES, CameraExtrinsics, CameraIntrinsics, pose_for_camera_type, scene_center_depth, warp_frame
from .guidance import GuidanceConfig, GuidanceTrace, InpaintTask, multiview_inpaint, trace_report
from .latent_masks import latent_shape
from .synthetic import build_spec, generate_synthetic_scene
from .warp_pipeline import build_training_set, num_workers, save_training_set

log = logging.getLogger(__name__)

STAGE_TAGS = {"dataset": 0, "train": 1, "inpaint": 2, "sample": 3}


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def sub_seed(seed: int, stage: str) -> int:
    return int(np.random.SeedSequence([seed, STAGE_TAGS[stage]]).generate_state(1)[0])


@dataclass
class ViewSpec:
    camera_type: str
    magnitude: float

    def __post_init__(self):
        if self.camera_type not in CAMERA_TYPES:
            raise ValueError(f"unknown camera type {self.camera_type!r}")


@dataclass
class RunConfig:
    mode: str
    seed: int
    out: str
    frames: Optional[str] = None
    depths: Optional[str] = None
    scene: Optional[object] = None
    S: int = 8
    backend: str = "ddpm"
    guidance_steps: int = 40
    prior_std: float = 0.5
    training: dict = field(default_factory=dict)
    views: List[ViewSpec] = field(default_factory=list)
    vfov_deg: float = 55.0

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "RunConfig":
        d = dict(d)
        if "seed" not in d:
            raise ValueError("config must set 'seed'")
        views = [ViewSpec(v["camera_type"], float(v["magnitude"])) for v in d.pop("views", [])]
        guidance = d.pop("guidance", {})
        for k in ("S", "backend"):
            if k in guidance:
                d[k] = guidance[k]
        if "steps" in guidance:
            d["guidance_steps"] = guidance["steps"]
        cfg = cls(views=views, **d)
        if base_dir is not None:
            for attr in ("frames", "depths", "out"):
                p = getattr(cfg, attr)
                if p is not None and not Path(p).is_absolute():
                    setattr(cfg, attr, str(Path(base_dir) / p))
        return cfg

    def validate(self) -> None:
        if self.mode not in ("static", "dynamic"):
            raise ValueError(f"mode must be static or dynamic, got {self.mode!r}")
        if self.scene is None:
            for p in (self.frames, self.depths):
                if p is None or not Path(p).exists():
                    raise ValueError(f"input path {p!r} does not exist")
        if not self.views:
            if self.mode == "dynamic":
                self.views = [ViewSpec(ct, 8.0 if ct.startswith("orbit") else 0.25) for ct in CAMERA_TYPES]
            else:
                raise ValueError("static mode needs at least one view")
        TrainConfig.from_dict({**self.training, "mode": self.mode})
        GuidanceConfig(self.S, self.guidance_steps, self.backend, self.seed)


def _load_inputs(cfg: RunConfig):
    if cfg.scene is not None:
        spec = build_spec(cfg.scene, cfg.seed)
        frames, depths, oracle = generate_synthetic_scene(spec, cfg.seed)
        return io.to_uint8(frames), list(depths), spec.intrinsics, oracle
    video = io.read_frames(cfg.frames)
    depths = io.read_depths(cfg.depths)
    if len(depths) != len(video):
        raise ValueError(f"{len(video)} frames but {len(depths)} depth maps")
    H, W = video.shape[1:3]
    K = CameraIntrinsics.default(W, H, cfg.vfov_deg)
    depth_file = sorted(Path(cfg.depths).glob("frame_*.depth"))[0]
    return video, depths, K, SceneOracle.from_depth(depths[0], K, depth_file=str(depth_file))


def _clean(x):
    return float(x) if np.isfinite(x) else None


def run_pipeline(cfg: RunConfig) -> dict:
    """Run every stage; returns the metrics dict (also written to metrics.json)."""
    torch.set_num_threads(num_workers())
    stage = "validate"
    try:
        cfg.validate()
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        stage = "ingest"
        video, depths, K, oracle = _load_inputs(cfg)
        N, H, W = video.shape[:3]
        latent_shape(N, H, W)

        stage = "dataset"
        ts = build_training_set(video, depths, K, cfg.mode, sub_seed(cfg.seed, "dataset"))
        save_training_set(ts, out / "dataset")

        stage = "train"
        tcfg = TrainConfig.from_dict({**cfg.training, "mode": cfg.mode, "seed": sub_seed(cfg.seed, "train")})
        prepared = [prepare_sample(s, cfg.mode) for s in ts.samples]
        model, losses = train(ts, tcfg)
        schedule = linear_schedule(tcfg.T)
        io.write_json(out / "train_config.json", tcfg.to_dict())
        save_checkpoint(out / "model.ravm", model, {"train_config": tcfg.to_dict()})
        final_eval = evaluation_loss(model, prepared, schedule)

        center = scene_center_depth(depths[0])
        source = CameraExtrinsics.identity()
        poses = [pose_for_camera_type(v.camera_type, v.magnitude, center, source) for v in cfg.views]
        view_ids = [f"view_{i:02d}" for i in range(len(cfg.views))]
        for vid, p in zip(view_ids, poses):
            oracle.add_view(vid, p)
        first = io.to_float(video[0])

        report = None
        if cfg.mode == "static":
            stage = "inpaint"
            tasks = []
            for i, p in enumerate(poses):
                warped, mask = warp_frame(first, depths[0], K, source, p)
                tasks.append(InpaintTask(warped, mask, p, i))
            prior_objective = "eps" if cfg.backend == "ddpm" else "velocity"
            prior = GaussianInpaintPrior(cfg.prior_std, prior_objective,
                                         linear_schedule(cfg.guidance_steps) if cfg.backend == "ddpm" else None)
            scorer = OracleScorer(oracle)
            trace = GuidanceTrace()
            gcfg = GuidanceConfig(cfg.S, cfg.guidance_steps, cfg.backend, sub_seed(cfg.seed, "inpaint"))
            starts = [io.to_uint8(img) for img in multiview_inpaint(tasks, prior, gcfg, scorer, trace)]
            inp = out / "inpainted"
            inp.mkdir(exist_ok=True)
            for vid, img in zip(view_ids, starts):
                io.write_png(inp / f"{vid}.png", img)
            scene_doc = oracle.to_dict()
            for v in scene_doc["views"]:
                v["image"] = f"{v['id']}.png"
            io.write_json(inp / "scene.json", scene_doc)
            report = trace_report(trace, scorer.calls)
            io.write_json(out / "inpaint_report.json", report)
        else:
            starts = [io.to_uint8(first)] * len(cfg.views)

        stage = "sample"
        lat_shape = encode_video(video).shape
        videos = []
        seed = sub_seed(cfg.seed, "sample")
        for i, (vid, view, start) in enumerate(zip(view_ids, cfg.views, starts)):
            first_lat = encode_video(start[None])[0]
            cond = video_condition(first_lat, view.camera_type, with_camera=(cfg.mode == "dynamic"))
            z = sample_ddpm(model, cond, lat_shape, schedule, seed, i)
            frames = io.to_uint8(decode_video(z))
            frames[0] = start
            io.write_frames(out / "videos" / vid, frames)
            videos.append(frames)

        stage = "metrics"
        metrics = {"mode": cfg.mode, "train": {"initial_loss": losses[0], "final_loss": losses[-1],
                                               "final_eval_loss": final_eval}, "views": []}
        # dynamic views are compared through their last frame, static ones through the start image
        compare = [io.to_float(v[-1] if cfg.mode == "dynamic" else v[0]) for v in videos]
        for vid, view, img in zip(view_ids, cfg.views, compare):
            s = oracle_score(img, first, oracle, vid, source)
            metrics["views"].append({"id": vid, "camera_type": view.camera_type, "magnitude": view.magnitude,
                                     "oracle_score": _clean(s)})
        if len(videos) >= 2:
            pairs = [(compare[i], view_ids[i], compare[j], view_ids[j])
                     for i in range(len(videos)) for j in range(i + 1, len(videos))]
            metrics["pairwise_tsed"] = tsed(pairs, oracle)
            metrics["pairwise_oracle"] = [
                {"a": a, "b": b, "score": _clean(oracle_score(ia, ib, oracle, a, b))} for ia, a, ib, b in pairs]
        if report is not None:
            metrics["scorer_calls"] = report["scorer_calls"]
        io.write_json(out / "metrics.json", metrics)
        return metrics
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-tagged with the failing stage
        raise StageError(stage, str(exc)) from exc
