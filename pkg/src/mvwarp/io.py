"""On-disk formats: PNG frame/mask sequences, binary depth maps, latent masks."""
from __future__ import annotations

import json
from pathlib import Path
from typing import List

import numpy as np
from PIL import Image


def frame_name(i: int, ext: str = "png") -> str:
    return f"frame_{i:05d}.{ext}"


def to_uint8(image: np.ndarray) -> np.ndarray:
    if image.dtype == np.uint8:
        return image
    return np.clip(np.floor(np.asarray(image) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def to_float(image: np.ndarray) -> np.ndarray:
    if image.dtype == np.uint8:
        return image.astype(np.float64) / 255.0
    return np.asarray(image, dtype=np.float64)


def write_png(path, image: np.ndarray) -> None:
    Image.fromarray(to_uint8(image)).save(path, format="PNG")


def read_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def write_mask_png(path, mask: np.ndarray) -> None:
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def read_mask_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return (np.asarray(im.convert("L")) > 127).astype(np.uint8)


def write_frames(directory, frames) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        write_png(d / frame_name(i), f)


def read_frames(directory) -> np.ndarray:
    paths = sorted(Path(directory).glob("frame_*.png"))
    if not paths:
        raise FileNotFoundError(f"no frame_*.png files in {directory}")
    return np.stack([read_rgb(p) for p in paths])


def write_masks(directory, masks) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, m in enumerate(masks):
        write_mask_png(d / frame_name(i), m)


def read_masks(directory) -> np.ndarray:
    paths = sorted(Path(directory).glob("frame_*.png"))
    if not paths:
        raise FileNotFoundError(f"no frame_*.png files in {directory}")
    return np.stack([read_mask_png(p) for p in paths])


def write_depth(path, depth: np.ndarray) -> None:
    depth = np.asarray(depth)
    H, W = depth.shape
    with open(path, "wb") as fh:
        fh.write(f"depth {W} {H}\n".encode("ascii"))
        fh.write(depth.astype("<f4").tobytes(order="C"))


def read_depth(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 3 or header[0] != "depth":
            raise ValueError(f"{path}: bad depth header")
        W, H = int(header[1]), int(header[2])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != W * H:
        raise ValueError(f"{path}: expected {W * H} floats, found {data.size}")
    return data.reshape(H, W).astype(np.float64)


def write_depths(directory, depths) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, dep in enumerate(depths):
        write_depth(d / frame_name(i, "depth"), dep)


def read_depths(directory) -> List[np.ndarray]:
    paths = sorted(Path(directory).glob("frame_*.depth"))
    if not paths:
        raise FileNotFoundError(f"no frame_*.depth files in {directory}")
    return [read_depth(p) for p in paths]


def write_latent_mask(path, mask: np.ndarray) -> None:
    n, h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(f"lmask {n} {h} {w}\n".encode("ascii"))
        fh.write(np.asarray(mask, dtype=np.uint8).tobytes(order="C"))


def read_latent_mask(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != "lmask":
            raise ValueError(f"{path}: bad latent mask header")
        n, h, w = (int(x) for x in header[1:])
        data = np.frombuffer(fh.read(), dtype=np.uint8)
    if data.size != n * h * w:
        raise ValueError(f"{path}: expected {n * h * w} cells, found {data.size}")
    return data.reshape(n, h, w).copy()


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
