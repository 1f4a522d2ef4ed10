"""Warped-video training sets: M camera trajectories plus the original video."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import io
from .geometry import (
    CAMERA_TYPES,
    CameraExtrinsics,
    CameraIntrinsics,
    Trajectory,
    make_dynamic_trajectory,
    make_static_trajectory,
    scene_center_depth,
    warp_frame,
)

ORBIT_RANGE_DEG = (4.0, 12.0)
DOLLY_RANGE = (0.1, 0.4)
SAMPLES_PER_TYPE = {"static": 2, "dynamic": 1}


def num_workers() -> int:
    try:
        return max(1, int(os.environ.get("RAV_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class TrainingSample:
    video: np.ndarray  # (N, H, W, 3)
    mask_video: np.ndarray  # (N, H, W) in {0, 1}
    camera_label: str  # a camera type or "original"
    magnitude: float
    poses: List[CameraExtrinsics] = field(default_factory=list)
    sample_id: str = ""

    @property
    def mask_fraction(self) -> float:
        return float(self.mask_video.mean())


@dataclass
class TrainingSet:
    samples: List[TrainingSample]
    mode: str
    seed: int
    K: Optional[CameraIntrinsics] = None

    def __len__(self):
        return len(self.samples)

    @property
    def original(self) -> TrainingSample:
        return next(s for s in self.samples if s.camera_label == "original")


def source_poses(n: int) -> List[CameraExtrinsics]:
    """Per-frame source extrinsics, fixed by convention to the identity."""
    return [CameraExtrinsics.identity()] * n


def warp_video(video: np.ndarray, depths: Sequence[np.ndarray], K: CameraIntrinsics, trajectory: Trajectory,
               sources: Optional[Sequence[CameraExtrinsics]] = None):
    """Warp frame i with depth i into trajectory.poses[i]; returns (frames, masks)."""
    N = len(video)
    if len(depths) != N or len(trajectory) != N:
        raise ValueError(f"length mismatch: {N} frames, {len(depths)} depths, {len(trajectory)} poses")
    sources = sources or source_poses(N)

    def one(i):
        return warp_frame(video[i], depths[i], K, sources[i], trajectory.poses[i])

    with ThreadPoolExecutor(num_workers()) as pool:
        results = list(pool.map(one, range(N)))
    frames = np.stack([r[0] for r in results])
    masks = np.stack([r[1] for r in results])
    return frames, masks


def draw_magnitude(camera_type: str, rng: np.random.Generator) -> float:
    lo, hi = ORBIT_RANGE_DEG if camera_type.startswith("orbit") else DOLLY_RANGE
    return float(rng.uniform(lo, hi))


def plan_trajectories(mode: str, seed: int, per_type: Optional[int] = None):
    """(camera_type, magnitude) for every warped sample; one RNG stream per sample."""
    if mode not in SAMPLES_PER_TYPE:
        raise ValueError(f"mode must be static or dynamic, got {mode!r}")
    per_type = per_type or SAMPLES_PER_TYPE[mode]
    plan = []
    for ct in CAMERA_TYPES:
        for _ in range(per_type):
            rng = np.random.default_rng([seed, len(plan)])
            plan.append((ct, draw_magnitude(ct, rng)))
    return plan


def build_training_set(video: np.ndarray, depths: Sequence[np.ndarray], K: CameraIntrinsics, mode: str,
                       seed: int, per_type: Optional[int] = None) -> TrainingSet:
    video = np.asarray(video)
    N = len(video)
    center = scene_center_depth(depths[0])
    make = make_static_trajectory if mode == "static" else make_dynamic_trajectory
    samples = [TrainingSample(video.copy(), np.ones(video.shape[:3], dtype=np.uint8), "original", 0.0,
                              source_poses(N), "original")]
    for j, (ct, mag) in enumerate(plan_trajectories(mode, seed, per_type)):
        traj = make(ct, mag, N, CameraExtrinsics.identity(), center)
        frames, masks = warp_video(video, depths, K, traj)
        samples.append(TrainingSample(frames, masks, ct, mag, traj.poses, f"{j:02d}_{ct}"))
    return TrainingSet(samples, mode, seed, K)


def save_training_set(ts: TrainingSet, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in ts.samples:
        frame_dir = Path("samples") / s.sample_id / "frames"
        mask_dir = Path("samples") / s.sample_id / "masks"
        io.write_frames(out / frame_dir, s.video)
        io.write_masks(out / mask_dir, s.mask_video)
        N, H, W = s.mask_video.shape
        entries.append({
            "id": s.sample_id, "camera_label": s.camera_label, "magnitude": s.magnitude,
            "frame_dir": str(frame_dir), "mask_dir": str(mask_dir),
            "num_frames": N, "width": W, "height": H,
            "poses": [p.to_dict() for p in s.poses],
        })
    manifest = {"mode": ts.mode, "seed": ts.seed, "samples": entries}
    if ts.K is not None:
        manifest["intrinsics"] = ts.K.to_dict()
    io.write_json(out / "manifest.json", manifest)
    return out / "manifest.json"


def load_training_set(dataset_dir) -> TrainingSet:
    d = Path(dataset_dir)
    manifest = io.read_json(d / "manifest.json")
    samples = []
    for e in manifest["samples"]:
        samples.append(TrainingSample(
            io.read_frames(d / e["frame_dir"]), io.read_masks(d / e["mask_dir"]),
            e["camera_label"], float(e["magnitude"]),
            [CameraExtrinsics.from_dict(p) for p in e.get("poses", [])], e["id"]))
    K = CameraIntrinsics.from_dict(manifest["intrinsics"]) if "intrinsics" in manifest else None
    return TrainingSet(samples, manifest["mode"], int(manifest["seed"]), K)
