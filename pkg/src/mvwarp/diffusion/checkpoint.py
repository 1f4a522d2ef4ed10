"""RAVM checkpoint files.

Layout: b"RAVM", uint32 version, uint32 header length, UTF-8 JSON header,
then one little-endian float32 block per parameter in declaration order.
"""
from __future__ import annotations

import json
import struct

import numpy as np
import torch

from .model import GaussianInpaintPrior, ToyDenoiser
from .schedule import linear_schedule

MAGIC = b"RAVM"
VERSION = 1


def _blocks(model):
    if isinstance(model, ToyDenoiser):
        return [(name, t.detach().numpy()) for name, t in model.state_dict().items()]
    return [("std", np.array([model.std]))]


def save_checkpoint(path, model, extra: dict = None) -> None:
    blocks = _blocks(model)
    if isinstance(model, ToyDenoiser):
        header = {"kind": "toy_denoiser", "config": model.config()}
    else:
        T = model.schedule.T if model.schedule is not None else None
        header = {"kind": "gaussian_prior", "config": {"objective": model.objective, "T": T}}
    header["params"] = [{"name": n, "shape": list(a.shape)} for n, a in blocks]
    header["extra"] = extra or {}
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(raw)))
        fh.write(raw)
        for _, a in blocks:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a RAVM checkpoint")
        version, n = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        return json.loads(fh.read(n).decode("utf-8"))


def load_checkpoint(path):
    """Returns (model, header)."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a RAVM checkpoint")
        version, n = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(n).decode("utf-8"))
        arrays = {}
        for p in header["params"]:
            count = int(np.prod(p["shape"])) if p["shape"] else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4")
            if data.size != count:
                raise ValueError(f"{path}: truncated parameter block {p['name']}")
            arrays[p["name"]] = data.reshape(p["shape"]).astype(np.float64)
    cfg = header["config"]
    if header["kind"] == "toy_denoiser":
        model = ToyDenoiser(**cfg)
        model.load_state_dict({k: torch.as_tensor(v) for k, v in arrays.items()})
    elif header["kind"] == "gaussian_prior":
        schedule = linear_schedule(cfg["T"]) if cfg.get("T") else None
        model = GaussianInpaintPrior(float(arrays["std"][0]), cfg["objective"], schedule)
    else:
        raise ValueError(f"{path}: unknown model kind {header['kind']!r}")
    return model, header
