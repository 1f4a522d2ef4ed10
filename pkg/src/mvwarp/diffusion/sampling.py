"""Unguided samplers and the keyed RNG streams shared with guided sampling.

Noise for candidate s at step i of view v comes from the stream keyed
(seed, v, i, s); initial noise from (seed, v). Any sampler that follows
this contract reproduces the same draws regardless of execution order.
"""
from __future__ import annotations

import numpy as np

from .schedule import DiffusionSchedule, ddpm_update, flow_grid, flow_sde_step, flow_velocity_step


def init_noise(seed: int, view: int, shape) -> np.ndarray:
    return np.random.default_rng([seed, view, 0]).standard_normal(shape)


def step_noise(seed: int, view: int, step: int, candidate: int, shape) -> np.ndarray:
    return np.random.default_rng([seed, view, 1, step, candidate]).standard_normal(shape)


def sample_ddpm(model, cond, shape, schedule: DiffusionSchedule, seed: int, view: int = 0) -> np.ndarray:
    z = init_noise(seed, view, shape)
    for i, t in enumerate(range(schedule.T, 0, -1)):
        eps_hat = model.predict(z, t, cond)
        z = ddpm_update(z, eps_hat, t, step_noise(seed, view, i, 0, shape), schedule)
    return z


def sample_flow(model, cond, shape, steps: int, seed: int, view: int = 0) -> np.ndarray:
    ts = flow_grid(steps)
    z = init_noise(seed, view, shape)
    for i in range(steps):
        v_hat = model.predict(z, ts[i], cond)
        z = flow_sde_step(z, ts[i], ts[i + 1] - ts[i], v_hat, step_noise(seed, view, i, 0, shape))
    return z


def integrate_ode(model, z, cond, steps: int) -> np.ndarray:
    ts = flow_grid(steps)
    for i in range(steps):
        z = flow_velocity_step(z, ts[i], ts[i + 1] - ts[i], model.predict(z, ts[i], cond))
    return z
