"""Consistency of multi-view inpainting as a function of the candidate count S.

For each S, completes four warped views of the two-plane scene over a range
of seeds. Reports the mean pairwise oracle score and TSED per S, plus how
often the guided run beats the S=1 baseline on the same seed.

    python3 scripts/guidance_sweep.py --seeds 20 --S 1 2 4 8 --backend ddpm
"""
import argparse
import json
import time

import numpy as np

from mvwarp.consistency import OracleScorer, oracle_score, tsed
from mvwarp.diffusion.model import GaussianInpaintPrior
from mvwarp.diffusion.schedule import linear_schedule
from mvwarp.geometry import CameraExtrinsics, pose_for_camera_type, warp_frame
from mvwarp.guidance import GuidanceConfig, InpaintTask, multiview_inpaint
from mvwarp.synthetic import generate_synthetic_scene, two_plane_spec

VIEWS = (("orbit_left", 6.0), ("orbit_left", 10.0), ("orbit_up", 8.0), ("dolly_out", 0.2))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--S", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--backend", choices=("ddpm", "flow"), default="ddpm")
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--json", help="write the summary here")
    args = ap.parse_args()

    spec = two_plane_spec(args.size, args.size, 1)
    frames, depths, oracle = generate_synthetic_scene(spec)
    center = float(np.median(depths[0]))
    poses = [pose_for_camera_type(ct, m, center) for ct, m in VIEWS]
    warped = [warp_frame(frames[0], depths[0], spec.intrinsics, CameraExtrinsics.identity(), p) for p in poses]
    steps = 40 if args.backend == "ddpm" else 50
    model = (GaussianInpaintPrior(0.5, "eps", linear_schedule(steps)) if args.backend == "ddpm"
             else GaussianInpaintPrior(0.5, "velocity"))
    n = len(poses)

    def run(S, seed):
        tasks = [InpaintTask(img, m, p, i) for i, ((img, m), p) in enumerate(zip(warped, poses))]
        out = multiview_inpaint(tasks, model, GuidanceConfig(S, steps, args.backend, seed), OracleScorer(oracle))
        score = np.mean([oracle_score(out[i], out[j], oracle, poses[i], poses[j])
                         for i in range(n) for j in range(n) if i != j])
        t = tsed([(out[i], poses[i], out[j], poses[j]) for i in range(n) for j in range(i + 1, n)], oracle)
        return score, t

    baseline = None
    summary = []
    print(f"{'S':>3} {'oracle':>10} {'tsed':>6} {'wins':>6} {'sec':>6}")
    for S in args.S:
        t0 = time.perf_counter()
        res = np.array([run(S, seed) for seed in range(args.seeds)])
        if baseline is None and S == 1:
            baseline = res
        wins = int(np.sum(res[:, 0] > baseline[:, 0])) if baseline is not None else None
        row = {"S": S, "oracle": float(res[:, 0].mean()), "tsed": float(res[:, 1].mean()), "wins_vs_S1": wins,
               "seconds": time.perf_counter() - t0}
        summary.append(row)
        print(f"{S:>3} {row['oracle']:>10.5f} {row['tsed']:>6.3f} {str(wins):>6} {row['seconds']:>6.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(summary, fh, indent=2)


if __name__ == "__main__":
    main()
