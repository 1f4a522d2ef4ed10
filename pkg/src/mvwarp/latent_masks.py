"""Reduce pixel-space visibility masks to the latent grid of a codec that
compresses 8x spatially and keeps frame 0 then folds groups of four frames."""
from __future__ import annotations

import numpy as np

SPATIAL = 8
TEMPORAL = 4


def latent_shape(num_frames: int, height: int, width: int):
    if height % SPATIAL or width % SPATIAL:
        raise ValueError(f"H, W must be divisible by {SPATIAL}, got {height}x{width}")
    if (num_frames - 1) % TEMPORAL or num_frames < 1:
        raise ValueError(f"frame count must be 1 mod {TEMPORAL}, got {num_frames}")
    return 1 + (num_frames - 1) // TEMPORAL, height // SPATIAL, width // SPATIAL


def spatial_downsample_nearest(mask_frame: np.ndarray, anchor: str = "top_left") -> np.ndarray:
    m = np.asarray(mask_frame)
    H, W = m.shape[-2:]
    if H % SPATIAL or W % SPATIAL:
        raise ValueError(f"H, W must be divisible by {SPATIAL}, got {H}x{W}")
    off = {"top_left": 0, "center": SPATIAL // 2}[anchor]
    return (m[..., off::SPATIAL, off::SPATIAL] != 0).astype(np.uint8)


def downsample_mask(mask_video: np.ndarray, anchor: str = "top_left") -> np.ndarray:
    """(N, H, W) binary masks -> (1 + (N-1)/4, H/8, W/8) latent mask."""
    m = np.asarray(mask_video)
    if m.ndim != 3:
        raise ValueError(f"mask video must be N x H x W, got shape {m.shape}")
    latent_shape(*m.shape)
    small = spatial_downsample_nearest(m, anchor)
    groups = small[1:].reshape(-1, TEMPORAL, *small.shape[1:])
    return np.concatenate([small[:1], groups.min(axis=1)], axis=0).astype(np.uint8)
