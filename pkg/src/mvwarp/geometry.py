"""Pinhole camera model, RGBD lifting, z-buffered forward splatting and
camera trajectories for the six camera families."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

CAMERA_TYPES = ("orbit_left", "orbit_right", "orbit_up", "orbit_down", "dolly_in", "dolly_out")

NEAR_PLANE = 1e-4
DEPTH_TIE_TOL = 1e-9
SE3_TOL = 1e-9
DEFAULT_VFOV_DEG = 55.0


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def default(cls, width: int, height: int, vfov_deg: float = DEFAULT_VFOV_DEG) -> "CameraIntrinsics":
        """Conventional intrinsics: square pixels, given vertical FOV, centred principal point."""
        f = 0.5 * height / math.tan(math.radians(vfov_deg) / 2)
        return cls(f, f, (width - 1) / 2, (height - 1) / 2, width, height)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return dict(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy, width=self.width, height=self.height)

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]), int(d["width"]), int(d["height"]))


@dataclass(frozen=True, eq=False)
class CameraExtrinsics:
    """World-to-camera transform: x_cam = R @ x_world + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() > SE3_TOL or abs(np.linalg.det(R) - 1.0) > SE3_TOL:
            raise ValueError("R is not a proper rotation")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "CameraExtrinsics":
        return cls(np.eye(3), np.zeros(3))

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return -self.R.T @ self.t

    @property
    def optical_axis(self) -> np.ndarray:
        """Unit viewing direction in world coordinates."""
        return self.R[2].copy()

    def transform(self, points: np.ndarray) -> np.ndarray:
        return points @ self.R.T + self.t

    def same_as(self, other: "CameraExtrinsics") -> bool:
        return np.array_equal(self.R, other.R) and np.array_equal(self.t, other.t)

    def key(self) -> bytes:
        return self.R.tobytes() + self.t.tobytes()

    def to_dict(self) -> dict:
        return {"R": self.R.tolist(), "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraExtrinsics":
        return cls(np.array(d["R"], dtype=np.float64), np.array(d["t"], dtype=np.float64))

    @classmethod
    def from_center(cls, R: np.ndarray, center: np.ndarray) -> "CameraExtrinsics":
        return cls(R, -R @ center)


@dataclass
class Trajectory:
    poses: List[CameraExtrinsics]
    kind: str
    camera_type: str
    magnitude: float

    def __len__(self):
        return len(self.poses)


@dataclass
class PointCloud:
    points: np.ndarray  # (P, 3) world coordinates
    colors: np.ndarray  # (P, C)
    source_pixel: np.ndarray  # (P, 2) integer (row, col)
    image_shape: Tuple[int, int] = field(default=(0, 0))

    def __len__(self):
        return len(self.points)


def check_depth(depth: np.ndarray) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValueError(f"depth must be H x W, got shape {depth.shape}")
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise ValueError("depth must be finite and strictly positive")
    return depth


def pixel_grid(height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    v, u = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return u.astype(np.float64), v.astype(np.float64)


def unproject(u, v, depth, K: CameraIntrinsics) -> np.ndarray:
    """Camera-frame points for pixel coordinates (u, v) at the given depths."""
    depth = np.asarray(depth, dtype=np.float64)
    x = depth * (np.asarray(u, dtype=np.float64) - K.cx) / K.fx
    y = depth * (np.asarray(v, dtype=np.float64) - K.cy) / K.fy
    return np.stack([x, y, depth], axis=-1)


def project(points_world: np.ndarray, K: CameraIntrinsics, pose: CameraExtrinsics):
    """Continuous pixel coordinates (u, v) and camera depth z of world points."""
    q = pose.transform(np.asarray(points_world, dtype=np.float64))
    z = q[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * q[..., 0] / z + K.cx
        v = K.fy * q[..., 1] / z + K.cy
    return u, v, z


def lift_to_pointcloud(frame: np.ndarray, depth: np.ndarray, K: CameraIntrinsics,
                       pose: CameraExtrinsics) -> PointCloud:
    frame = np.asarray(frame)
    depth = check_depth(depth)
    if frame.shape[:2] != depth.shape:
        raise ValueError(f"frame {frame.shape[:2]} and depth {depth.shape} differ in size")
    H, W = depth.shape
    u, v = pixel_grid(H, W)
    pc = unproject(u, v, depth, K).reshape(-1, 3)
    world = (pc - pose.t) @ pose.R  # R^T (p_c - t), row-vector form
    colors = frame.reshape(H * W, -1)
    rows, cols = np.divmod(np.arange(H * W), W)
    return PointCloud(world, colors, np.stack([rows, cols], axis=1), (H, W))


def splat_indices(points: np.ndarray, K: CameraIntrinsics, target: CameraExtrinsics):
    """Z-buffered nearest-pixel splat of points into the target view.

    Returns ``(winner, zbuf)``: per target pixel the index of the visible point
    (-1 where nothing landed) and its camera depth (inf where nothing landed).
    Equal depths (within DEPTH_TIE_TOL) go to the lowest point index.
    """
    H, W = K.height, K.width
    n = len(points)
    winner = np.full(H * W, -1, dtype=np.int64)
    zbuf = np.full(H * W, np.inf)
    if n == 0:
        return winner.reshape(H, W), zbuf.reshape(H, W)
    q = target.transform(points)
    z = q[:, 2]
    front = z > NEAR_PLANE
    idx = np.nonzero(front)[0]
    q, z = q[front], z[front]
    u = np.floor(K.fx * q[:, 0] / z + K.cx + 0.5)
    v = np.floor(K.fy * q[:, 1] / z + K.cy + 0.5)
    inside = (u >= 0) & (u < W) & (v >= 0) & (v < H)
    idx, z = idx[inside], z[inside]
    pix = (v[inside] * W + u[inside]).astype(np.int64)

    np.minimum.at(zbuf, pix, z)
    nearest = z <= zbuf[pix] + DEPTH_TIE_TOL
    lowest = np.full(H * W, n, dtype=np.int64)
    np.minimum.at(lowest, pix[nearest], idx[nearest])
    hit = lowest < n
    winner[hit] = lowest[hit]
    # report the winner's own depth, not the minimum of a tie group
    zfull = np.full(n, np.inf)
    zfull[idx] = z
    zbuf[hit] = zfull[winner[hit]]
    return winner.reshape(H, W), zbuf.reshape(H, W)


def reproject(cloud: PointCloud, K: CameraIntrinsics, target: CameraExtrinsics,
              return_depth: bool = False):
    """Render the cloud from ``target``. Holes are black with mask 0."""
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    winner, zbuf = splat_indices(cloud.points, K, target)
    mask = winner >= 0
    C = cloud.colors.shape[1]
    image = np.zeros((K.height, K.width, C), dtype=cloud.colors.dtype)
    image[mask] = cloud.colors[winner[mask]]
    out = (image, mask.astype(np.uint8))
    return out + (zbuf,) if return_depth else out


def warp_frame(frame, depth, K, source: CameraExtrinsics, target: CameraExtrinsics, return_depth=False):
    return reproject(lift_to_pointcloud(frame, depth, K, source), K, target, return_depth=return_depth)


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    Kx = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    return np.eye(3) + math.sin(angle) * Kx + (1 - math.cos(angle)) * (Kx @ Kx)


def _orthonormalize(R: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return R


def pose_for_camera_type(camera_type: str, magnitude: float, scene_center_depth: float,
                         source_pose: Optional[CameraExtrinsics] = None) -> CameraExtrinsics:
    """Target pose for one of the six camera families.

    Orbits (magnitude in degrees) swing the camera rig about the point
    ``scene_center_depth`` ahead on the source optical axis, so the camera
    stays aimed at it. Dollies move along the optical axis by
    ``magnitude * scene_center_depth``.
    """
    if camera_type not in CAMERA_TYPES:
        raise ValueError(f"unknown camera type {camera_type!r}")
    if magnitude < 0:
        raise ValueError("magnitude must be non-negative")
    src = source_pose if source_pose is not None else CameraExtrinsics.identity()
    if magnitude == 0:
        return src
    # camera axes in world coordinates: x right, y down, z forward
    right, down, forward = src.R[0], src.R[1], src.R[2]
    center = src.center
    if camera_type.startswith("dolly"):
        step = magnitude * scene_center_depth
        sign = 1.0 if camera_type == "dolly_in" else -1.0
        return CameraExtrinsics.from_center(src.R, center + sign * step * forward)

    theta = math.radians(magnitude)
    # rotating the rig by Q about the pivot keeps the pivot on the optical axis
    if camera_type == "orbit_right":
        Q = _axis_rotation(down, -theta)
    elif camera_type == "orbit_left":
        Q = _axis_rotation(down, theta)
    elif camera_type == "orbit_up":
        Q = _axis_rotation(right, -theta)
    else:
        Q = _axis_rotation(right, theta)
    pivot = center + scene_center_depth * forward
    new_center = pivot + Q @ (center - pivot)
    R_new = _orthonormalize(src.R @ Q.T)
    return CameraExtrinsics.from_center(R_new, new_center)


def make_static_trajectory(camera_type: str, magnitude: float, N: int,
                           source_pose: Optional[CameraExtrinsics] = None,
                           scene_center_depth: float = 1.0) -> Trajectory:
    if N < 1:
        raise ValueError("N must be >= 1")
    pose = pose_for_camera_type(camera_type, magnitude, scene_center_depth, source_pose)
    return Trajectory([pose] * N, "static", camera_type, magnitude)


def make_dynamic_trajectory(camera_type: str, magnitude: float, N: int,
                            source_pose: Optional[CameraExtrinsics] = None,
                            scene_center_depth: float = 1.0) -> Trajectory:
    if N < 1:
        raise ValueError("N must be >= 1")
    if camera_type not in CAMERA_TYPES:
        raise ValueError(f"unknown camera type {camera_type!r}")
    src = source_pose if source_pose is not None else CameraExtrinsics.identity()
    poses = [src]
    for i in range(1, N):
        poses.append(pose_for_camera_type(camera_type, magnitude * i / (N - 1), scene_center_depth, src))
    return Trajectory(poses, "dynamic", camera_type, magnitude)


def rotation_angle_deg(a: CameraExtrinsics, b: CameraExtrinsics) -> float:
    """Geodesic angle between the orientations of two poses, in degrees."""
    R = a.R @ b.R.T
    # atan2 keeps precision at small angles where acos of the trace does not
    s = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    c = (np.trace(R) - 1) / 2
    return math.degrees(math.atan2(s, c))


def scene_center_depth(depth: np.ndarray) -> float:
    return float(np.median(depth))
