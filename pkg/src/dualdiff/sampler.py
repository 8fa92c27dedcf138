"""Generation loops: ancestral (probabilistic) and implicit (deterministic) samplers.

A model is any callable ``model(x, t) -> ModelOutput`` where ``t`` is a
timestep of the schedule it was trained on; respaced schedules translate their
own indices through ``source_indices`` before calling it.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .forward import backtrace_x0, eps_from_x0
from .parameterization import (check_r, clamp_x0, ddim_mean_from_eps, ddim_mean_from_x,
                               mu_from_eps, mu_from_x)
from .rng import Rng
from .schedule import DEFAULT_FLOOR, Guard, NoiseSchedule, respace

MODES = ("eps_only", "x_only", "dual", "fixed_r")
METHODS = ("ancestral", "implicit")
SIGMA_RULES = ("beta", "beta_tilde", "zero", "eta")


class SamplingError(RuntimeError):
    def __init__(self, step, cause):
        super().__init__(f"sampling failed at step t={step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass
class SamplerConfig:
    mode: str = "dual"
    method: str = "implicit"
    steps: int = 10
    sigma_rule: str = "zero"
    eta: float = 0.0
    clamp: bool = False
    clamp_lo: float = -1.0
    clamp_hi: float = 1.0
    seed: int = 0
    fixed_r_profile: tuple | None = None
    guard: bool = False
    guard_floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.sigma_rule not in SIGMA_RULES:
            raise ValueError(f"unknown sigma rule {self.sigma_rule!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if (self.fixed_r_profile is not None) != (self.mode == "fixed_r"):
            raise ValueError("fixed_r_profile must be given exactly when mode == 'fixed_r'")
        if self.fixed_r_profile is not None:
            if len(self.fixed_r_profile) != self.steps:
                raise ValueError("fixed_r_profile needs one entry per step")
            check_r(self.fixed_r_profile)
        if self.sigma_rule == "eta" and not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")

    @property
    def guard_policy(self) -> Guard:
        return Guard(self.guard_floor, self.guard)


@dataclass
class Trajectory:
    """Per-step records of a batched run, step 0 being the first (noisiest) step."""

    states: list = field(default_factory=list)
    pred_x0_eps: list = field(default_factory=list)
    pred_x0_x: list = field(default_factory=list)
    r_values: list = field(default_factory=list)
    step_times: list = field(default_factory=list)
    timesteps: list = field(default_factory=list)
    mode: str = "dual"

    @property
    def pred_x0(self):
        if self.mode == "eps_only":
            return self.pred_x0_eps
        if self.mode == "x_only":
            return self.pred_x0_x
        return [r * px + (1 - r) * pe for r, px, pe in zip(self.r_values, self.pred_x0_x, self.pred_x0_eps)]

    def sample(self, i: int) -> dict:
        """Arrays for the i-th sample of the batch."""
        return {
            "states": np.stack([x[i] for x in self.states]),
            "pred_x0": np.stack([x[i] for x in self.pred_x0]),
            "r_values": np.stack([x[i] for x in self.r_values]),
        }


def sigma_for(t, s: NoiseSchedule, cfg: SamplerConfig) -> float:
    rule = cfg.sigma_rule
    if rule == "zero":
        return 0.0
    if rule == "beta":
        return float(np.sqrt(s.coef("betas", t)))
    if rule == "beta_tilde":
        return float(np.sqrt(s.coef("betas_tilde", t)))
    return float(cfg.eta * np.sqrt(s.coef("betas_tilde", t)))


def _r_for(out, j, cfg):
    if cfg.mode == "x_only":
        return np.ones_like(out.r)
    if cfg.mode == "eps_only":
        return np.zeros_like(out.r)
    if cfg.mode == "fixed_r":
        return np.full_like(out.r, cfg.fixed_r_profile[j])
    return out.r


def step_means(model, x_t, t, s: NoiseSchedule, cfg: SamplerConfig, j: int | None = None):
    """Head-specific means at respaced step ``t``: (mu_x, mu_eps, r, out, x0_x, x0_eps).

    ``j`` is the position in the fixed-r profile (0 = noisiest step).
    """
    guard = cfg.guard_policy
    out = model(x_t, s.model_timestep(t))
    x_hat = clamp_x0(np.asarray(out.x_hat, np.float64), cfg.clamp_lo, cfg.clamp_hi, cfg.clamp)
    eps_hat = np.asarray(out.eps_hat, np.float64)
    x0_eps = backtrace_x0(x_t, eps_hat, t, s, guard)
    if cfg.clamp:
        # consistent noise for the clamped x0 keeps the subtractive path in range too
        x0_eps = clamp_x0(x0_eps, cfg.clamp_lo, cfg.clamp_hi)
        eps_hat = eps_from_x0(x_t, x0_eps, t, s, guard)
    if cfg.method == "ancestral":
        mx = mu_from_x(x_t, x_hat, t, s, guard).mean
        me = mu_from_eps(x_t, eps_hat, t, s, guard).mean
    else:
        sig = sigma_for(t, s, cfg)
        mx = ddim_mean_from_x(x_t, x_hat, t, s, sig, guard).mean
        me = ddim_mean_from_eps(x_t, eps_hat, t, s, sig, guard).mean
    r = _r_for(out, j if j is not None else s.T - t, cfg)
    return mx, me, np.asarray(r, np.float64), out, x_hat, x0_eps


def _combine(mx, me, r, mode):
    if mode == "x_only":
        return mx
    if mode == "eps_only":
        return me
    return r * mx + (1.0 - r) * me


def ancestral_step(model, x_t, t, s: NoiseSchedule, cfg: SamplerConfig, rng: Rng):
    mx, me, r, *_ = step_means(model, x_t, t, s, cfg)
    mean = _combine(mx, me, r, cfg.mode)
    if t == 1:
        return mean
    return mean + sigma_for(t, s, cfg) * rng.normal(np.shape(x_t))


def implicit_step(model, x_t, t, s: NoiseSchedule, cfg: SamplerConfig, rng: Rng | None = None):
    mx, me, r, *_ = step_means(model, x_t, t, s, cfg)
    mean = _combine(mx, me, r, cfg.mode)
    sig = sigma_for(t, s, cfg)
    if sig > 0:
        if rng is None:
            raise ValueError("a random stream is required when sigma_t > 0")
        mean = mean + sig * rng.normal(np.shape(x_t))
    return mean


def generate(model, s: NoiseSchedule, cfg: SamplerConfig, n_samples: int, record: bool = False,
             x_T=None):
    """Draw x_T ~ N(0, I), respace ``s`` to ``cfg.steps`` and run the configured sampler.

    Returns ``(samples, trajectory)``; the trajectory is None unless ``record``.
    """
    D = model.D
    traj = Trajectory(mode=cfg.mode) if record else None
    if n_samples == 0:
        return np.zeros((0, D)), traj
    rs = respace(s, cfg.steps)
    rng = Rng(cfg.seed, 11)
    x = rng.normal((n_samples, D)) if x_T is None else np.array(x_T, np.float64)
    noise_rng = rng.child(1)
    if record:
        traj.states.append(x.copy())
    for j, t in enumerate(range(rs.T, 0, -1)):
        t0 = time.perf_counter()
        try:
            mx, me, r, out, x0_x, x0_eps = step_means(model, x, t, rs, cfg, j)
            mean = _combine(mx, me, r, cfg.mode)
            sig = sigma_for(t, rs, cfg)
            if cfg.method == "ancestral" and t == 1:
                sig = 0.0
            x = mean + sig * noise_rng.normal(x.shape) if sig > 0 else mean
            if not np.all(np.isfinite(x)):
                raise FloatingPointError("non-finite state")
        except (FloatingPointError, ValueError) as e:
            raise SamplingError(t, e) from e
        if record:
            traj.states.append(x.copy())
            traj.pred_x0_eps.append(x0_eps)
            traj.pred_x0_x.append(x0_x)
            traj.r_values.append(r)
            traj.timesteps.append(int(rs.model_timestep(t)))
            traj.step_times.append(time.perf_counter() - t0)
    return x, traj


def fixed_r_profile_from_stats(r_stats, K: int) -> tuple:
    """Frozen per-step interpolation profile (noisiest step first), clamped to [0, 1]."""
    r_stats = np.asarray(r_stats, np.float64).reshape(-1)
    if len(r_stats) != K:
        raise ValueError(f"r statistics cover {len(r_stats)} steps, sampler needs {K}")
    return tuple(float(v) for v in np.clip(r_stats, 0.0, 1.0))
