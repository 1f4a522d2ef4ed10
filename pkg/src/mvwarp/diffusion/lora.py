"""Low-rank residual adaptation of linear maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

FULL_RANK = 128
TOY_RANK = 4


@dataclass
class LoraParams:
    theta_B: np.ndarray  # d x r
    theta_A: np.ndarray  # r x k
    alpha: float = 1.0

    def __post_init__(self):
        d, r = self.theta_B.shape
        r2, k = self.theta_A.shape
        if r != r2:
            raise ValueError(f"rank mismatch: B has {r} columns, A has {r2} rows")
        if r > min(d, k) / 2:
            raise ValueError(f"rank {r} too large for a {d}x{k} weight")

    @property
    def r(self) -> int:
        return self.theta_B.shape[1]

    @classmethod
    def init(cls, d: int, k: int, r: int, alpha: float = 1.0, rng=None) -> "LoraParams":
        rng = rng or np.random.default_rng(0)
        A = rng.normal(0.0, 1.0 / np.sqrt(k), (r, k))
        return cls(np.zeros((d, r)), A, alpha)


def lora_forward(x, theta_0: np.ndarray, lora: LoraParams):
    """(theta_0 + alpha * B @ A) @ x, without materialising the update."""
    x = np.asarray(x, dtype=np.float64)
    d, k = theta_0.shape
    if lora.theta_B.shape[0] != d or lora.theta_A.shape[1] != k or x.shape[0] != k:
        raise ValueError("dimension mismatch between input, base weight and LoRA factors")
    return theta_0 @ x + lora.alpha * (lora.theta_B @ (lora.theta_A @ x))


def materialize(theta_0: np.ndarray, lora: LoraParams) -> np.ndarray:
    return theta_0 + lora.alpha * lora.theta_B @ lora.theta_A


class LoRALinear(nn.Module):
    """Frozen base linear layer plus a trainable rank-r residual (B starts at zero)."""

    def __init__(self, in_features: int, out_features: int, rank: int, alpha: float = 1.0,
                 generator: torch.Generator = None, dtype=torch.float64):
        super().__init__()
        if rank > min(in_features, out_features) / 2:
            raise ValueError(f"rank {rank} too large for a {out_features}x{in_features} layer")
        bound = 1.0 / np.sqrt(in_features)
        w = (torch.rand(out_features, in_features, generator=generator, dtype=dtype) * 2 - 1) * bound
        b = (torch.rand(out_features, generator=generator, dtype=dtype) * 2 - 1) * bound
        self.weight = nn.Parameter(w, requires_grad=False)
        self.bias = nn.Parameter(b, requires_grad=False)
        self.lora_A = nn.Parameter(torch.randn(rank, in_features, generator=generator, dtype=dtype) * bound)
        self.lora_B = nn.Parameter(torch.zeros(out_features, rank, dtype=dtype))
        self.alpha = alpha

    def forward(self, x):
        return F.linear(x, self.weight, self.bias) + self.alpha * F.linear(F.linear(x, self.lora_A), self.lora_B)

    def base_forward(self, x):
        return F.linear(x, self.weight, self.bias)
