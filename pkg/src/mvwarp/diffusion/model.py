"""Toy latent codec, a small conditional MLP denoiser with LoRA layers, and a
closed-form Gaussian inpainting prior used as a stand-in image model."""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from ..geometry import CAMERA_TYPES
from ..latent_masks import SPATIAL, TEMPORAL, latent_shape
from .lora import LoRALinear
from .schedule import DiffusionSchedule

OBJECTIVES = ("eps", "velocity")


# ---- toy codec ---------------------------------------------------------------

def to_latent_range(x):
    """[0, 1] pixels (or uint8) -> [-1, 1]."""
    x = np.asarray(x)
    if x.dtype == np.uint8:
        x = x.astype(np.float64) / 255.0
    return 2.0 * np.asarray(x, dtype=np.float64) - 1.0


def from_latent_range(z):
    return np.clip((np.asarray(z) + 1.0) / 2.0, 0.0, 1.0)


def encode_video(video) -> np.ndarray:
    """(N, H, W, C) -> (1 + (N-1)/4, H/8, W/8, C): 8x8 average pooling, frame 0
    kept, later frames averaged in groups of four."""
    x = to_latent_range(video)
    N, H, W, C = x.shape
    n, h, w = latent_shape(N, H, W)
    pooled = x.reshape(N, h, SPATIAL, w, SPATIAL, C).mean(axis=(2, 4))
    rest = pooled[1:].reshape(n - 1, TEMPORAL, h, w, C).mean(axis=1)
    return np.concatenate([pooled[:1], rest], axis=0)


def decode_video(latent: np.ndarray) -> np.ndarray:
    """Nearest-neighbour inverse of ``encode_video``; returns [0, 1] frames."""
    first = latent[:1]
    rest = np.repeat(latent[1:], TEMPORAL, axis=0)
    z = np.concatenate([first, rest], axis=0)
    z = np.repeat(np.repeat(z, SPATIAL, axis=1), SPATIAL, axis=2)
    return from_latent_range(z)


def camera_onehot(label: str) -> np.ndarray:
    v = np.zeros(len(CAMERA_TYPES))
    if label != "original":
        v[CAMERA_TYPES.index(label)] = 1.0
    return v


def video_condition(first_latent: np.ndarray, label: Optional[str], with_camera: bool) -> np.ndarray:
    """[flattened first-frame latent || camera one-hot (dynamic mode only)]."""
    parts = [np.asarray(first_latent, dtype=np.float64).ravel()]
    if with_camera:
        parts.append(camera_onehot(label or "original"))
    return np.concatenate(parts)


def inpaint_condition(warped_latent: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Channel concat of the masked image latent and the mask: (H, W, C + 1)."""
    m = np.asarray(mask, dtype=np.float64)[..., None]
    return np.concatenate([warped_latent * m, m], axis=-1)


# ---- MLP denoiser ------------------------------------------------------------

def time_embedding(t, dim: int) -> torch.Tensor:
    t = torch.as_tensor(t, dtype=torch.float64).reshape(-1, 1)
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t * freqs
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class ToyDenoiser(nn.Module):
    """MLP over [noisy latent || time embedding || condition].

    Every linear layer carries a LoRA residual; only ``lora_A``/``lora_B`` are
    trainable. ``objective`` says whether the output is a noise prediction
    (DDPM steps) or a velocity (flow time in [0, 1]).
    """

    def __init__(self, latent_shape: Sequence[int], cond_dim: int, hidden: int = 256, rank: int = 4,
                 alpha: float = 1.0, time_dim: int = 32, seed: int = 0, objective: str = "eps"):
        super().__init__()
        if objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        self.latent_shape = tuple(int(s) for s in latent_shape)
        self.cond_dim = int(cond_dim)
        self.hidden = hidden
        self.rank = rank
        self.alpha = alpha
        self.time_dim = time_dim
        self.seed = seed
        self.objective = objective
        D = int(np.prod(self.latent_shape))
        g = torch.Generator().manual_seed(seed)
        self.l1 = LoRALinear(D + time_dim + cond_dim, hidden, rank, alpha, g)
        self.l2 = LoRALinear(hidden, hidden, rank, alpha, g)
        self.l3 = LoRALinear(hidden, D, rank, alpha, g)
        self.act = nn.SiLU()

    def config(self) -> dict:
        return dict(latent_shape=list(self.latent_shape), cond_dim=self.cond_dim, hidden=self.hidden,
                    rank=self.rank, alpha=self.alpha, time_dim=self.time_dim, seed=self.seed,
                    objective=self.objective)

    def lora_layers(self):
        return [self.l1, self.l2, self.l3]

    def lora_parameters(self):
        return [p for layer in self.lora_layers() for p in (layer.lora_A, layer.lora_B)]

    def base_parameters(self):
        return [p for layer in self.lora_layers() for p in (layer.weight, layer.bias)]

    def _time_input(self, t):
        t = torch.as_tensor(t, dtype=torch.float64)
        return t * 1000.0 if self.objective == "velocity" else t

    def forward(self, z, t, cond, use_lora: bool = True):
        B = z.shape[0]
        x = torch.cat([z.reshape(B, -1), time_embedding(self._time_input(t), self.time_dim).expand(B, -1),
                       cond.reshape(B, -1)], dim=1)
        if use_lora:
            h = self.act(self.l1(x))
            h = self.act(self.l2(h))
            out = self.l3(h)
        else:
            h = self.act(self.l1.base_forward(x))
            h = self.act(self.l2.base_forward(h))
            out = self.l3.base_forward(h)
        return out.reshape(B, *self.latent_shape)

    @torch.no_grad()
    def predict(self, z, t, cond) -> np.ndarray:
        zt = torch.as_tensor(np.asarray(z, dtype=np.float64)).reshape(1, *self.latent_shape)
        ct = torch.as_tensor(np.asarray(cond, dtype=np.float64)).reshape(1, -1)
        return self.forward(zt, t, ct).reshape(np.shape(z)).numpy()


# ---- closed-form inpainting prior --------------------------------------------

class GaussianInpaintPrior:
    """Exact denoiser for data = visible pixels fixed, holes i.i.d. Gaussian.

    The condition is ``inpaint_condition(warped_latent, mask)``. Holes are
    centred on the per-channel mean of the visible latents with standard
    deviation ``std``; visible entries have zero variance.
    """

    def __init__(self, std: float = 0.5, objective: str = "eps", schedule: Optional[DiffusionSchedule] = None):
        if objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if objective == "eps" and schedule is None:
            raise ValueError("an eps-objective prior needs the DDPM schedule")
        self.std = float(std)
        self.objective = objective
        self.schedule = schedule

    def moments(self, cond):
        cond = np.asarray(cond, dtype=np.float64)
        img, m = cond[..., :-1], cond[..., -1:]
        vis = m[..., 0] > 0.5
        fill = img[vis].mean(axis=0) if vis.any() else np.zeros(img.shape[-1])
        mean = np.where(m > 0.5, img, fill)
        var = np.where(m > 0.5, 0.0, self.std ** 2) * np.ones_like(img)
        return mean, var

    def predict(self, z, t, cond) -> np.ndarray:
        a, b = self.moments(cond)
        if self.objective == "eps":
            ab = self.schedule.alpha_bars[int(t)]
            V = np.maximum(ab * b + 1.0 - ab, 1e-300)
            return math.sqrt(1.0 - ab) * (z - math.sqrt(ab) * a) / V
        V = np.maximum(t * t * b + (1.0 - t) ** 2, 1e-300)
        return a + (t * b - (1.0 - t)) / V * (z - t * a)
