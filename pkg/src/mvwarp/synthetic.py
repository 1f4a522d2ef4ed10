"""Ray-cast synthetic scenes with exact depth, used as ground truth in tests."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .geometry import CameraExtrinsics, CameraIntrinsics


@dataclass
class Texture:
    base: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    amplitude: float = 0.2
    frequency: float = 1.5  # radians per scene unit
    phases: Tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def color(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """RGB at surface coordinates (a, b); smooth, so nearest splatting aliases little."""
        out = np.empty(a.shape + (3,))
        for c in range(3):
            wave = np.sin(self.frequency * a + self.phases[2 * c]) * np.cos(self.frequency * b + self.phases[2 * c + 1])
            out[..., c] = self.base[c] + self.amplitude * wave
        return np.clip(out, 0.0, 1.0)


@dataclass
class Plane:
    """Fronto-parallel plane z = depth; bounds (xmin, xmax, ymin, ymax) or None for infinite."""
    depth: float
    bounds: Optional[Tuple[float, float, float, float]] = None
    texture: Texture = field(default_factory=Texture)
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class Sphere:
    center: Tuple[float, float, float]
    radius: float
    texture: Texture = field(default_factory=Texture)
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class SceneSpec:
    width: int = 64
    height: int = 64
    num_frames: int = 13
    planes: List[Plane] = field(default_factory=list)
    spheres: List[Sphere] = field(default_factory=list)
    vfov_deg: float = 55.0

    def validate(self) -> None:
        if self.width < 1 or self.height < 1 or self.num_frames < 1:
            raise ValueError("scene size and frame count must be positive")
        if not self.planes and not self.spheres:
            raise ValueError("scene has no surfaces")
        for p in self.planes:
            if p.depth <= 0:
                raise ValueError("plane depth must be positive")
            if p.bounds is not None and (p.bounds[0] >= p.bounds[1] or p.bounds[2] >= p.bounds[3]):
                raise ValueError("plane bounds must be (xmin, xmax, ymin, ymax) with min < max")
        for s in self.spheres:
            if s.radius <= 0:
                raise ValueError("sphere radius must be positive")

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.default(self.width, self.height, self.vfov_deg)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["planes"] = [Plane(**{**p, "texture": Texture(**p.get("texture", {}))}) for p in d.get("planes", [])]
        d["spheres"] = [Sphere(**{**s, "texture": Texture(**s.get("texture", {}))}) for s in d.get("spheres", [])]
        spec = cls(**d)
        spec.validate()
        return spec


def _random_texture(rng: np.random.Generator) -> Texture:
    base = tuple(float(x) for x in rng.uniform(0.25, 0.75, 3))
    phases = tuple(float(x) for x in rng.uniform(0, 2 * np.pi, 6))
    return Texture(base=base, amplitude=float(rng.uniform(0.1, 0.25)),
                   frequency=float(rng.uniform(0.8, 2.0)), phases=phases)


def two_plane_spec(width: int = 64, height: int = 64, num_frames: int = 13, near: float = 3.0,
                   far: float = 6.0, motion: float = 0.0, seed: int = 0) -> SceneSpec:
    """Infinite far plane plus a near rectangle covering the image centre."""
    rng = np.random.default_rng(seed)
    spec = SceneSpec(width, height, num_frames)
    half = 0.3 * near * np.tan(np.radians(spec.vfov_deg) / 2) * 2
    spec.planes = [
        Plane(far, None, _random_texture(rng)),
        Plane(near, (-half, half, -half, half), _random_texture(rng), (motion, 0.0, 0.0)),
    ]
    spec.validate()
    return spec


def random_spec(seed: int, width: int = 32, height: int = 32, num_frames: int = 5) -> SceneSpec:
    """A background plane with a random mix of rectangles and spheres in front."""
    rng = np.random.default_rng(seed)
    spec = SceneSpec(width, height, num_frames)
    far = float(rng.uniform(5.0, 9.0))
    spec.planes.append(Plane(far, None, _random_texture(rng)))
    for _ in range(int(rng.integers(1, 3))):
        d = float(rng.uniform(1.5, far - 1.0))
        x0, y0 = rng.uniform(-0.8, 0.3, 2) * d * 0.5
        w, h = rng.uniform(0.3, 0.8, 2) * d * 0.5
        vel = tuple(float(x) for x in rng.normal(0, 0.02, 3) * [1, 1, 0])
        spec.planes.append(Plane(d, (float(x0), float(x0 + w), float(y0), float(y0 + h)), _random_texture(rng), vel))
    for _ in range(int(rng.integers(0, 2))):
        d = float(rng.uniform(2.0, far - 1.5))
        c = (float(rng.uniform(-0.3, 0.3) * d), float(rng.uniform(-0.3, 0.3) * d), d)
        vel = tuple(float(x) for x in rng.normal(0, 0.02, 3) * [1, 1, 0])
        spec.spheres.append(Sphere(c, float(rng.uniform(0.3, 0.8)), _random_texture(rng), vel))
    spec.validate()
    return spec


def render(spec: SceneSpec, frame_index: int, pose: Optional[CameraExtrinsics] = None,
           K: Optional[CameraIntrinsics] = None):
    """Ray-cast one frame. Returns (rgb in [0,1], depth along the optical axis).

    Pixels whose ray hits nothing get depth inf and black colour.
    """
    pose = pose if pose is not None else CameraExtrinsics.identity()
    K = K if K is not None else spec.intrinsics
    H, W = K.height, K.width
    v, u = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    d_cam = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1)
    d_world = d_cam @ pose.R  # R^T d, row-vector form; camera z of a hit equals the ray parameter
    origin = pose.center

    depth = np.full((H, W), np.inf)
    rgb = np.zeros((H, W, 3))
    for p in spec.planes:
        offset = np.asarray(p.velocity) * frame_index
        z0 = p.depth + offset[2]
        dz = d_world[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (z0 - origin[2]) / dz
        hit = np.isfinite(s) & (s > 0)
        x = origin[0] + s * d_world[..., 0] - offset[0]
        y = origin[1] + s * d_world[..., 1] - offset[1]
        if p.bounds is not None:
            xmin, xmax, ymin, ymax = p.bounds
            hit &= (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)
        closer = hit & (s < depth)
        depth[closer] = s[closer]
        rgb[closer] = p.texture.color(x[closer], y[closer])
    for sp in spec.spheres:
        c = np.asarray(sp.center) + np.asarray(sp.velocity) * frame_index
        oc = origin - c
        a = np.einsum("hwk,hwk->hw", d_world, d_world)
        b = 2 * d_world @ oc
        cc = oc @ oc - sp.radius ** 2
        disc = b * b - 4 * a * cc
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        s = (-b - sq) / (2 * a)
        hit = ok & (s > 0)
        closer = hit & (s < depth)
        pts = origin + s[..., None] * d_world - c
        # spherical texture coordinates scaled by radius
        lon = np.arctan2(pts[..., 0], pts[..., 2]) * sp.radius
        lat = np.arcsin(np.clip(pts[..., 1] / sp.radius, -1, 1)) * sp.radius
        depth[closer] = s[closer]
        rgb[closer] = sp.texture.color(lon[closer], lat[closer])
    return rgb, depth


PRESETS = {"two_planes": two_plane_spec, "random": random_spec}


def build_spec(spec, seed: int = 0) -> SceneSpec:
    """Resolve a SceneSpec, a dict, or a preset name (textures drawn from ``seed``)."""
    if isinstance(spec, SceneSpec):
        return spec
    if isinstance(spec, dict):
        if "preset" in spec:
            kwargs = {k: v for k, v in spec.items() if k != "preset"}
            return PRESETS[spec["preset"]](seed=seed, **kwargs)
        return SceneSpec.from_dict(spec)
    if isinstance(spec, str) and spec in PRESETS:
        return PRESETS[spec](seed=seed)
    raise ValueError(f"invalid scene spec {spec!r}")


def generate_synthetic_scene(spec, seed: int = 0):
    """Render every frame from the identity source pose.

    Returns (frames (N,H,W,3) float in [0,1], depths (N,H,W), SceneOracle).
    """
    from .consistency import SceneOracle

    spec = build_spec(spec, seed)
    spec.validate()
    frames, depths = [], []
    for i in range(spec.num_frames):
        rgb, dep = render(spec, i)
        if not np.all(np.isfinite(dep)):
            raise ValueError("scene does not cover every pixel; add a background plane")
        frames.append(rgb)
        depths.append(dep)
    oracle = SceneOracle.from_scene(spec, frame_index=0)
    return np.stack(frames), np.stack(depths), oracle
