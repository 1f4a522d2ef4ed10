"""Stochastic control guidance for multi-view consistent inpainting.

At every sampler step, S stochastic continuations are drawn from the current
state, each is scored through its clean estimate against the views completed
so far, and the best one becomes the new state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .diffusion.model import from_latent_range, inpaint_condition, to_latent_range
from .diffusion.sampling import init_noise, sample_ddpm, sample_flow, step_noise
from .diffusion.schedule import (
    DiffusionSchedule,
    clean_estimate_ddpm,
    ddpm_update,
    flow_clean_estimate,
    flow_grid,
    flow_sde_step,
    linear_schedule,
)
from .geometry import CameraExtrinsics

DEFAULT_S = 25
BACKENDS = ("ddpm", "flow")

Scorer = Callable[[np.ndarray, np.ndarray, CameraExtrinsics, CameraExtrinsics], float]


@dataclass
class GuidanceConfig:
    S: int = DEFAULT_S
    steps: int = 40
    backend: str = "ddpm"
    seed: int = 0

    def __post_init__(self):
        if self.S < 1 or self.steps < 1:
            raise ValueError("S and steps must be >= 1")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")


@dataclass
class CompletedView:
    image: np.ndarray
    pose: CameraExtrinsics


@dataclass
class InpaintTask:
    warped: np.ndarray  # (H, W, 3) in [0, 1]
    mask: np.ndarray  # (H, W), 1 = visible
    pose: CameraExtrinsics
    view_index: int = 0
    previously_completed: List[CompletedView] = field(default_factory=list)

    def __post_init__(self):
        if self.warped.shape[:2] != np.shape(self.mask):
            raise ValueError("mask and warped image differ in size")

    @property
    def condition(self) -> np.ndarray:
        return inpaint_condition(to_latent_range(self.warped), self.mask)

    def composite(self, image: np.ndarray) -> np.ndarray:
        """Visible pixels come from the warped input verbatim."""
        m = np.asarray(self.mask, dtype=bool)[..., None]
        return np.where(m, np.asarray(self.warped, dtype=np.float64), image)


class _Stepper:
    """Shared step logic for both backends: propose S candidates from a state."""

    def __init__(self, model, config: GuidanceConfig):
        self.model = model
        self.config = config
        if config.backend == "ddpm":
            if getattr(model, "objective", "eps") != "eps":
                raise ValueError("ddpm backend needs a noise-predicting model")
            sched = getattr(model, "schedule", None) or linear_schedule(config.steps)
            if sched.T != config.steps:
                raise ValueError(f"model schedule has T={sched.T}, config asks for {config.steps} steps")
            self.schedule: Optional[DiffusionSchedule] = sched
        else:
            if getattr(model, "objective", "velocity") != "velocity":
                raise ValueError("flow backend needs a velocity model")
            self.schedule = None
            self.grid = flow_grid(config.steps)

    def candidates(self, z, cond, i: int, view: int, S: int):
        """Returns (next states, clean estimates) for candidates 0..S-1 at step i."""
        seed, m = self.config.seed, self.model
        states, cleans = [], []
        if self.schedule is not None:
            t = self.schedule.T - i
            eps_hat = m.predict(z, t, cond)
            for s in range(S):
                zs = ddpm_update(z, eps_hat, t, step_noise(seed, view, i, s, z.shape), self.schedule)
                x0 = zs if t == 1 else clean_estimate_ddpm(zs, t - 1, m.predict(zs, t - 1, cond), self.schedule)
                states.append(zs)
                cleans.append(x0)
        else:
            t0, t1 = self.grid[i], self.grid[i + 1]
            v_hat = m.predict(z, t0, cond)
            for s in range(S):
                zs = flow_sde_step(z, t0, t1 - t0, v_hat, step_noise(seed, view, i, s, z.shape))
                x1 = zs if t1 >= 1.0 else flow_clean_estimate(zs, t1, m.predict(zs, t1, cond))
                states.append(zs)
                cleans.append(x1)
        return states, cleans


class GuidanceTrace(list):
    """Per-step selection log. Candidate states are kept only on request."""

    def __init__(self, keep_states: bool = False):
        super().__init__()
        self.keep_states = keep_states


def _record(trace, rec: dict, states) -> None:
    if getattr(trace, "keep_states", False):
        rec["states"] = states
    trace.append(rec)


def _best(rewards: np.ndarray) -> int:
    r = np.where(np.isnan(rewards), -np.inf, rewards)
    return int(np.argmax(r))  # first maximum: lowest index wins ties


def unguided_sample(task: InpaintTask, model, config: GuidanceConfig) -> np.ndarray:
    shape = task.warped.shape
    if config.backend == "ddpm":
        sched = getattr(model, "schedule", None) or linear_schedule(config.steps)
        z = sample_ddpm(model, task.condition, shape, sched, config.seed, task.view_index)
    else:
        z = sample_flow(model, task.condition, shape, config.steps, config.seed, task.view_index)
    return task.composite(from_latent_range(z))


def guided_sample(task: InpaintTask, model, config: GuidanceConfig, scorer: Scorer,
                  trace: Optional[list] = None) -> np.ndarray:
    refs = task.previously_completed
    if not refs:
        raise ValueError("guided_sample needs at least one completed view; use guided_sample_pair")
    stepper = _Stepper(model, config)
    cond = task.condition
    z = init_noise(config.seed, task.view_index, task.warped.shape)
    for i in range(config.steps):
        states, cleans = stepper.candidates(z, cond, i, task.view_index, config.S)
        rewards = np.empty(config.S)
        for s, x in enumerate(cleans):
            img = from_latent_range(x)
            rewards[s] = np.mean([scorer(img, r.image, task.pose, r.pose) for r in refs])
        best = _best(rewards)
        z = states[best]
        if trace is not None:
            _record(trace, {"phase": "single", "view": task.view_index, "step": i, "references": len(refs),
                            "rewards": rewards.tolist(), "selected": best}, states)
    return task.composite(from_latent_range(z))


def guided_sample_pair(task_a: InpaintTask, task_b: InpaintTask, model, config: GuidanceConfig,
                       scorer: Scorer, trace: Optional[list] = None):
    """Complete two views together, keeping the best of all S x S candidate pairs."""
    stepper = _Stepper(model, config)
    ca, cb = task_a.condition, task_b.condition
    za = init_noise(config.seed, task_a.view_index, task_a.warped.shape)
    zb = init_noise(config.seed, task_b.view_index, task_b.warped.shape)
    S = config.S
    for i in range(config.steps):
        sa, xa = stepper.candidates(za, ca, i, task_a.view_index, S)
        sb, xb = stepper.candidates(zb, cb, i, task_b.view_index, S)
        ia = [from_latent_range(x) for x in xa]
        ib = [from_latent_range(x) for x in xb]
        rewards = np.empty((S, S))
        for s in range(S):
            for r in range(S):
                rewards[s, r] = scorer(ia[s], ib[r], task_a.pose, task_b.pose)
        best = _best(rewards.ravel())
        s_star, r_star = divmod(best, S)
        za, zb = sa[s_star], sb[r_star]
        if trace is not None:
            _record(trace, {"phase": "pair", "view": [task_a.view_index, task_b.view_index], "step": i,
                            "references": 1, "rewards": rewards.ravel().tolist(), "selected": best}, (sa, sb))
    return task_a.composite(from_latent_range(za)), task_b.composite(from_latent_range(zb))


def multiview_inpaint(tasks: List[InpaintTask], model, config: GuidanceConfig, scorer: Scorer,
                      trace: Optional[list] = None) -> List[np.ndarray]:
    """First two views jointly, then each further view against all earlier ones."""
    if len(tasks) < 2:
        return [unguided_sample(t, model, config) for t in tasks]
    a, b = guided_sample_pair(tasks[0], tasks[1], model, config, scorer, trace)
    done = [CompletedView(a, tasks[0].pose), CompletedView(b, tasks[1].pose)]
    for task in tasks[2:]:
        task.previously_completed = list(done)
        img = guided_sample(task, model, config, scorer, trace)
        done.append(CompletedView(img, task.pose))
    return [d.image for d in done]


def _finite_or_none(x: float):
    return float(x) if np.isfinite(x) else None


def trace_report(trace: list, scorer_calls: int) -> dict:
    """JSON-friendly summary: selected reward per step, total scorer calls."""
    steps = []
    for rec in trace:
        steps.append({"phase": rec["phase"], "view": rec["view"], "step": rec["step"],
                      "references": rec["references"], "selected": rec["selected"],
                      "selected_reward": _finite_or_none(rec["rewards"][rec["selected"]])})
    return {"steps": steps, "scorer_calls": scorer_calls}
