from .losses import diffusion_loss, masked_diffusion_loss
from .lora import LoraParams, LoRALinear, lora_forward, materialize
from .model import GaussianInpaintPrior, ToyDenoiser, decode_video, encode_video
from .schedule import (
    DiffusionSchedule,
    clean_estimate_ddpm,
    ddpm_step,
    ddpm_update,
    flow_clean_estimate,
    flow_sde_step,
    flow_velocity_step,
    forward_noise,
    linear_schedule,
)
from .train import TrainConfig, train, train_step
