"""Geometry-oracle consistency scoring and epipolar metrics (SED / TSED)."""
from __future__ import annotations

from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    lift_to_pointcloud,
    pixel_grid,
    project,
    splat_indices,
    unproject,
)

COVIS_REL_TOL = 0.02
DEFAULT_TE = 1.25
DEFAULT_TM = 10
DEFAULT_PHOTO_TOL = 0.1
NO_OVERLAP = float("-inf")


class DegenerateGeometryError(ValueError):
    pass


class SceneOracle:
    """Ground-truth depth for arbitrary poses of one scene at one time instant.

    ``depth_fn(pose)`` returns an H x W depth map with inf where no surface is
    known. Named views can be registered for file-based workflows.
    """

    def __init__(self, K: CameraIntrinsics, depth_fn: Callable[[CameraExtrinsics], np.ndarray],
                 source: Optional[dict] = None):
        self.K = K
        self._depth_fn = depth_fn
        self.source = source or {}
        self.views: Dict[str, CameraExtrinsics] = {}
        self._depth_cache: Dict[bytes, np.ndarray] = {}
        self._corr_cache: Dict[bytes, Tuple[np.ndarray, np.ndarray]] = {}

    @classmethod
    def from_scene(cls, spec, frame_index: int = 0, K: Optional[CameraIntrinsics] = None) -> "SceneOracle":
        from .synthetic import render

        K = K or spec.intrinsics
        return cls(K, lambda pose: render(spec, frame_index, pose, K)[1],
                   {"kind": "synthetic", "scene": spec.to_dict(), "frame": frame_index})

    @classmethod
    def from_depth(cls, depth: np.ndarray, K: CameraIntrinsics,
                   source_pose: Optional[CameraExtrinsics] = None, depth_file: Optional[str] = None) -> "SceneOracle":
        """Oracle backed by a single source depth map; novel-view holes stay unknown."""
        source_pose = source_pose or CameraExtrinsics.identity()
        dummy = np.zeros(depth.shape + (1,))
        cloud = lift_to_pointcloud(dummy, depth, K, source_pose)

        def depth_fn(pose):
            return splat_indices(cloud.points, K, pose)[1]

        src = {"kind": "depth", "pose": source_pose.to_dict()}
        if depth_file is not None:
            src["depth_file"] = str(depth_file)
        return cls(K, depth_fn, src)

    def add_view(self, view_id: str, pose: CameraExtrinsics) -> None:
        self.views[view_id] = pose

    def pose(self, view) -> CameraExtrinsics:
        return view if isinstance(view, CameraExtrinsics) else self.views[view]

    def depth(self, view) -> np.ndarray:
        pose = self.pose(view)
        key = pose.key()
        if key not in self._depth_cache:
            self._depth_cache[key] = np.asarray(self._depth_fn(pose), dtype=np.float64)
        return self._depth_cache[key]

    def correspondence(self, view_a, view_b) -> Tuple[np.ndarray, np.ndarray]:
        """Flat pixel indices (in a, in b) of surface points co-visible in both views.

        Points of view a are splatted into view b; a splat counts only when its
        depth agrees with b's ground-truth depth, which rejects surfaces that b
        sees but a does not.
        """
        pa, pb = self.pose(view_a), self.pose(view_b)
        key = pa.key() + pb.key()
        if key in self._corr_cache:
            return self._corr_cache[key]
        da, db = self.depth(pa), self.depth(pb)
        valid = np.flatnonzero(np.isfinite(da))
        H, W = da.shape
        u, v = pixel_grid(H, W)
        pc = unproject(u.ravel()[valid], v.ravel()[valid], da.ravel()[valid], self.K)
        world = (pc - pa.t) @ pa.R
        winner, zbuf = splat_indices(world, self.K, pb)
        hit = winner.ravel() >= 0
        dbf = db.ravel()
        with np.errstate(invalid="ignore"):
            agree = hit & np.isfinite(dbf) & (np.abs(zbuf.ravel() - dbf) <= COVIS_REL_TOL * dbf)
        dst = np.flatnonzero(agree)
        src = valid[winner.ravel()[dst]]
        self._corr_cache[key] = (src, dst)
        return src, dst

    def to_dict(self) -> dict:
        return {
            "intrinsics": self.K.to_dict(),
            "source": self.source,
            "views": [{"id": k, **p.to_dict()} for k, p in self.views.items()],
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "SceneOracle":
        from .io import read_depth
        from .synthetic import SceneSpec

        K = CameraIntrinsics.from_dict(d["intrinsics"])
        src = d["source"]
        if src["kind"] == "synthetic":
            oracle = cls.from_scene(SceneSpec.from_dict(src["scene"]), int(src.get("frame", 0)), K)
        elif src["kind"] == "depth":
            path = Path(src["depth_file"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            oracle = cls.from_depth(read_depth(path), K, CameraExtrinsics.from_dict(src["pose"]), src["depth_file"])
        else:
            raise ValueError(f"unknown oracle source kind {src['kind']!r}")
        for v in d.get("views", []):
            oracle.add_view(v["id"], CameraExtrinsics.from_dict(v))
        return oracle


def oracle_score(candidate: np.ndarray, reference: np.ndarray, oracle: SceneOracle, view_a, view_b) -> float:
    """Negative MSE between the candidate (view a) warped into view b and the reference.

    Only co-visible pixels count. Returns -inf when the views share no surface.
    """
    src, dst = oracle.correspondence(view_a, view_b)
    if len(src) == 0:
        return NO_OVERLAP
    C = candidate.shape[-1]
    diff = candidate.reshape(-1, C)[src] - reference.reshape(-1, C)[dst]
    return -float(np.mean(diff * diff))


class OracleScorer:
    """Consistency scorer backed by a SceneOracle; counts its calls."""

    def __init__(self, oracle: SceneOracle):
        self.oracle = oracle
        self.calls = 0

    def __call__(self, candidate, reference, candidate_pose, reference_pose) -> float:
        self.calls += 1
        return oracle_score(candidate, reference, self.oracle, candidate_pose, reference_pose)


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def fundamental_from_poses(K: CameraIntrinsics, pose_a: CameraExtrinsics, pose_b: CameraExtrinsics) -> np.ndarray:
    """F with x_b^T F x_a = 0 for homogeneous pixel coordinates (u, v, 1)."""
    R_rel = pose_b.R @ pose_a.R.T
    t_rel = pose_b.t - R_rel @ pose_a.t
    if np.linalg.norm(t_rel) < 1e-12:
        raise DegenerateGeometryError("zero baseline: fundamental matrix undefined")
    K_inv = np.linalg.inv(K.matrix)
    F = K_inv.T @ skew(t_rel) @ R_rel @ K_inv
    return F / np.linalg.norm(F)


def _homog(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.concatenate([x, np.ones((len(x), 1))], axis=1)


def epipolar_distances(xa: np.ndarray, xb: np.ndarray, F: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Point-to-epipolar-line distances in pixels: (x_b to F x_a, x_a to F^T x_b)."""
    ha, hb = _homog(xa), _homog(xb)
    lb = ha @ F.T
    la = hb @ F
    resid = np.einsum("ij,ij->i", hb, lb)
    db = np.abs(resid) / np.hypot(lb[:, 0], lb[:, 1])
    da = np.abs(resid) / np.hypot(la[:, 0], la[:, 1])
    return db, da


def per_match_sed(xa, xb, F) -> np.ndarray:
    db, da = epipolar_distances(xa, xb, F)
    return np.sqrt(0.5 * (db ** 2 + da ** 2))


def sed(matches, F: np.ndarray) -> float:
    """Root-mean symmetric epipolar distance (pixels) of ``matches = (xa, xb)``."""
    xa, xb = matches
    if len(xa) == 0:
        raise ValueError("sed needs at least one match")
    db, da = epipolar_distances(xa, xb, F)
    return float(np.sqrt(np.mean(0.5 * (db ** 2 + da ** 2))))


def oracle_matches(oracle: SceneOracle, view_a, view_b, image_a=None, image_b=None,
                   photo_tol: Optional[float] = DEFAULT_PHOTO_TOL, stride: int = 1):
    """Correspondences from ground-truth geometry: (xa, xb) as (u, v) pixel coordinates.

    ``xa`` are pixel centres of view a, ``xb`` their exact sub-pixel projections
    in view b. With images given, matches whose colours differ by more than
    ``photo_tol`` (max over channels) are dropped, as a descriptor matcher would.
    """
    pa, pb = oracle.pose(view_a), oracle.pose(view_b)
    K = oracle.K
    da, db = oracle.depth(pa), oracle.depth(pb)
    H, W = da.shape
    u, v = pixel_grid(H, W)
    sel = np.zeros((H, W), dtype=bool)
    sel[::stride, ::stride] = True
    sel &= np.isfinite(da)
    ua, va = u[sel], v[sel]
    world = (unproject(ua, va, da[sel], K) - pa.t) @ pa.R
    ub, vb, zb = project(world, K, pb)
    ri, ci = np.floor(vb + 0.5), np.floor(ub + 0.5)
    inside = (zb > 0) & (ri >= 0) & (ri < H) & (ci >= 0) & (ci < W)
    ri, ci = ri.astype(np.int64), ci.astype(np.int64)
    ri[~inside], ci[~inside] = 0, 0
    dref = db[ri, ci]
    keep = inside & np.isfinite(dref) & (np.abs(zb - dref) <= COVIS_REL_TOL * dref)
    if image_a is not None and image_b is not None and photo_tol is not None:
        ca = np.asarray(image_a, dtype=np.float64)[va.astype(np.int64), ua.astype(np.int64)]
        cb = np.asarray(image_b, dtype=np.float64)[ri, ci]
        keep &= np.abs(ca - cb).max(axis=-1) <= photo_tol
    xa = np.stack([ua[keep], va[keep]], axis=1)
    xb = np.stack([ub[keep], vb[keep]], axis=1)
    return xa, xb


def pair_is_consistent(xa, xb, F, T_e: float, T_m: int) -> bool:
    if len(xa) < T_m or len(xa) == 0:
        return False
    return bool(np.median(per_match_sed(xa, xb, F)) < T_e)


def tsed(frame_pairs: Sequence, oracle: SceneOracle, T_e: float = DEFAULT_TE, T_m: int = DEFAULT_TM,
         photo_tol: Optional[float] = DEFAULT_PHOTO_TOL, stride: int = 1) -> float:
    """Fraction of pairs (image_a, view_a, image_b, view_b) that are epipolar-consistent."""
    if len(frame_pairs) == 0:
        raise ValueError("tsed needs at least one pair")
    good = 0
    for image_a, view_a, image_b, view_b in frame_pairs:
        xa, xb = oracle_matches(oracle, view_a, view_b, image_a, image_b, photo_tol, stride)
        F = fundamental_from_poses(oracle.K, oracle.pose(view_a), oracle.pose(view_b))
        good += pair_is_consistent(xa, xb, F, T_e, T_m)
    return good / len(frame_pairs)
