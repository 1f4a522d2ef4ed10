"""Variance-preserving DDPM schedule, forward process and single sampler steps.

Step indices run 0..T with alpha_bar[0] = 1 (clean data). Flow time runs
0 (pure noise) to 1 (data), with z_t = t * data + (1 - t) * noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_T = 40
REFERENCE_T = 1000
REFERENCE_BETAS = (1e-4, 2e-2)
MAX_BETA = 0.999


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    betas: np.ndarray  # length T + 1, betas[0] = 0

    @property
    def T(self) -> int:
        return len(self.betas) - 1

    @property
    def step_alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.step_alphas)

    @property
    def alpha_t(self) -> np.ndarray:
        """Signal coefficient sqrt(alpha_bar); alpha_t**2 + sigma_t**2 = 1."""
        return np.sqrt(self.alpha_bars)

    @property
    def sigma_t(self) -> np.ndarray:
        return np.sqrt(1.0 - self.alpha_bars)


def linear_schedule(T: int = DEFAULT_T, beta_start=None, beta_end=None) -> DiffusionSchedule:
    """Linear betas. Endpoints default to the 1000-step reference range rescaled
    by 1000 / T (capped below 1), so short chains still end close to pure noise."""
    if T < 1:
        raise ValueError("T must be >= 1")
    scale = REFERENCE_T / T
    lo = min(REFERENCE_BETAS[0] * scale, MAX_BETA) if beta_start is None else beta_start
    hi = min(REFERENCE_BETAS[1] * scale, MAX_BETA) if beta_end is None else beta_end
    if not (0 < lo <= hi < 1):
        raise ValueError(f"betas must satisfy 0 < start <= end < 1, got {lo}, {hi}")
    # a one-step chain takes the terminal beta
    betas = np.array([hi]) if T == 1 else np.linspace(lo, hi, T)
    return DiffusionSchedule(np.concatenate([[0.0], betas]))


def _check_step(t: int, schedule: DiffusionSchedule, lo: int = 1) -> None:
    if not (lo <= t <= schedule.T):
        raise ValueError(f"step {t} outside [{lo}, {schedule.T}]")


def forward_noise(z0, t: int, eps, schedule: DiffusionSchedule):
    if np.shape(eps) != np.shape(z0):
        raise ValueError(f"noise shape {np.shape(eps)} != latent shape {np.shape(z0)}")
    _check_step(t, schedule, lo=0)
    ab = schedule.alpha_bars[t]
    return math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * eps


def clean_estimate_ddpm(z, t: int, eps_hat, schedule: DiffusionSchedule):
    """Tweedie estimate of the clean sample from the state at step t."""
    _check_step(t, schedule, lo=0)
    ab = schedule.alpha_bars[t]
    if ab == 1.0:
        return z
    return (z - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)


def ddpm_update(z_t, eps_hat, t: int, eps, schedule: DiffusionSchedule):
    """Ancestral step t -> t-1 with posterior variance; no noise at t = 1."""
    _check_step(t, schedule)
    beta = schedule.betas[t]
    ab = schedule.alpha_bars[t]
    mean = (z_t - (beta / math.sqrt(1.0 - ab)) * eps_hat) / math.sqrt(1.0 - beta)
    if t == 1:
        return mean
    var = beta * (1.0 - schedule.alpha_bars[t - 1]) / (1.0 - ab)
    return mean + math.sqrt(var) * eps


def ddpm_step(z_t, model, condition, t: int, eps, schedule: DiffusionSchedule):
    return ddpm_update(z_t, model.predict(z_t, t, condition), t, eps, schedule)


def flow_velocity_step(z, t: float, dt: float, v_hat):
    if not (0 <= t < t + dt <= 1 + 1e-12):
        raise ValueError(f"need 0 <= t < t + dt <= 1, got t={t}, dt={dt}")
    return z + v_hat * dt


def flow_sde_step(z, t: float, dt: float, v_hat, eps):
    """Euler-Maruyama step of dZ = v dt - Z_{0|t} (1-t) dt + sqrt(2 (1-t)^2) dW.

    Z_{0|t} = z - t v is the noise estimate; the extra drift is the score term
    that keeps the marginals of the deterministic flow.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    noise_est = z - t * v_hat
    return z + v_hat * dt - noise_est * (1.0 - t) * dt + math.sqrt(2.0 * (1.0 - t) ** 2 * dt) * eps


def flow_clean_estimate(z, t: float, v_hat):
    return z + (1.0 - t) * v_hat


def flow_grid(steps: int) -> np.ndarray:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    return np.linspace(0.0, 1.0, steps + 1)
