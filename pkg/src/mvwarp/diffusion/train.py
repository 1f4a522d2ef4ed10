"""LoRA fine-tuning of the toy denoiser with the masked diffusion loss."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import List

import numpy as np
import torch

from ..geometry import CAMERA_TYPES
from ..latent_masks import downsample_mask
from .losses import masked_diffusion_loss
from .model import ToyDenoiser, encode_video, video_condition
from .schedule import DEFAULT_T, DiffusionSchedule, forward_noise, linear_schedule

log = logging.getLogger(__name__)

DEFAULT_STEPS = 400
DEFAULT_LR = 1e-4
DEFAULT_WEIGHT_DECAY = 1e-3


@dataclass
class TrainConfig:
    steps: int = DEFAULT_STEPS
    lr: float = DEFAULT_LR
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    betas: tuple = (0.9, 0.999)
    rank: int = 4
    alpha: float = 1.0
    hidden: int = 256
    seed: int = 0
    mode: str = "static"
    T: int = DEFAULT_T
    objective: str = "eps"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)


@dataclass
class PreparedSample:
    z0: np.ndarray  # latent video
    latent_mask: np.ndarray
    cond: np.ndarray
    label: str


def prepare_sample(sample, mode: str) -> PreparedSample:
    z0 = encode_video(sample.video)
    lmask = downsample_mask(sample.mask_video)
    cond = video_condition(z0[0], sample.camera_label, with_camera=(mode == "dynamic"))
    return PreparedSample(z0, lmask, cond, sample.camera_label)


def condition_dim(latent_shape, mode: str) -> int:
    n, h, w, c = latent_shape
    return h * w * c + (len(CAMERA_TYPES) if mode == "dynamic" else 0)


def make_model(latent_shape, config: TrainConfig) -> ToyDenoiser:
    return ToyDenoiser(latent_shape, condition_dim(latent_shape, config.mode), hidden=config.hidden,
                       rank=config.rank, alpha=config.alpha, seed=config.seed, objective=config.objective)


def make_optimizer(model: ToyDenoiser, config: TrainConfig):
    return torch.optim.AdamW(model.lora_parameters(), lr=config.lr, weight_decay=config.weight_decay,
                             betas=tuple(config.betas))


def sample_loss(model: ToyDenoiser, ps: PreparedSample, schedule: DiffusionSchedule, t, eps: np.ndarray):
    """Masked loss for one sample at a given noise draw (torch scalar with graph)."""
    eps_t = torch.as_tensor(eps)
    z0 = torch.as_tensor(ps.z0)
    if model.objective == "eps":
        zt = forward_noise(z0, int(t), eps_t, schedule)
        target = eps_t
    else:
        zt = t * z0 + (1.0 - t) * eps_t
        target = z0 - eps_t
    pred = model(zt.unsqueeze(0), t, torch.as_tensor(ps.cond).unsqueeze(0))[0]
    return masked_diffusion_loss(target, pred, torch.as_tensor(ps.latent_mask, dtype=torch.float64))


def draw_time(model: ToyDenoiser, schedule: DiffusionSchedule, rng: np.random.Generator):
    if model.objective == "eps":
        return int(rng.integers(1, schedule.T + 1))
    return float(rng.uniform(0.0, 1.0))


def train_step(model: ToyDenoiser, ps: PreparedSample, schedule: DiffusionSchedule, rng: np.random.Generator,
               optimizer) -> float:
    t = draw_time(model, schedule, rng)
    eps = rng.standard_normal(ps.z0.shape)
    loss = sample_loss(model, ps, schedule, t, eps)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.detach())


def evaluation_loss(model: ToyDenoiser, prepared: List[PreparedSample], schedule: DiffusionSchedule,
                    seed: int = 12345, draws: int = 16) -> float:
    """Mean masked loss over a fixed set of (sample, t, noise) draws."""
    rng = np.random.default_rng(seed)
    total = 0.0
    with torch.no_grad():
        for _ in range(draws):
            for ps in prepared:
                t = draw_time(model, schedule, rng)
                total += float(sample_loss(model, ps, schedule, t, rng.standard_normal(ps.z0.shape)))
    return total / (draws * len(prepared))


def train(training_set, config: TrainConfig, model: ToyDenoiser = None):
    """Fine-tune LoRA factors over ``config.steps`` uniformly drawn samples.

    Returns (model, per-step losses).
    """
    if len(training_set.samples) == 0:
        raise ValueError("empty training set")
    prepared = [prepare_sample(s, config.mode) for s in training_set.samples]
    schedule = linear_schedule(config.T)
    if model is None:
        model = make_model(prepared[0].z0.shape, config)
    opt = make_optimizer(model, config)
    rng = np.random.default_rng([config.seed, 1])
    losses = []
    for step in range(config.steps):
        ps = prepared[int(rng.integers(len(prepared)))]
        losses.append(train_step(model, ps, schedule, rng, opt))
        if step % 100 == 0:
            log.info("step %d loss %.5f", step, losses[-1])
    return model, losses
