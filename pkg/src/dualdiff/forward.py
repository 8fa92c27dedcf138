"""Forward (noising) direction of the diffusion.

All noise is passed in by the caller, so every function here is pure. ``t`` may
be an int shared by the whole batch or an int array with one entry per row.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .schedule import NO_GUARD, Guard, NoiseSchedule


@dataclass
class Batch:
    """N samples of dimension D sharing one timestep."""

    data: np.ndarray
    t: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data))
        if not np.all(np.isfinite(self.data)):
            raise ValueError("batch contains non-finite entries")
        if self.t < 0:
            raise ValueError("batch timestep must be >= 0")

    @property
    def shape(self):
        return self.data.shape


def _same_shape(a, b, what):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"shape mismatch for {what}: {np.shape(a)} vs {np.shape(b)}")


def q_sample(x0, t, eps, s: NoiseSchedule):
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    _same_shape(x0, eps, "x0/eps")
    ab = s.coef("alpha_bars", t)
    return np.sqrt(ab) * x0 + np.sqrt(s.coef("one_minus_alpha_bars", t)) * eps


def forward_kernel_step(x_prev, t, eps, s: NoiseSchedule):
    """One Markov noising step x_{t-1} -> x_t."""
    _same_shape(x_prev, eps, "x_prev/eps")
    b = s.coef("betas", t)
    return np.sqrt(1.0 - b) * x_prev + np.sqrt(b) * eps


def backtrace_x0(x_t, eps, t, s: NoiseSchedule, guard: Guard = NO_GUARD):
    """Invert q_sample for x0 given the noise."""
    _same_shape(x_t, eps, "x_t/eps")
    ab = s.coef("alpha_bars", t)
    return (x_t - np.sqrt(s.coef("one_minus_alpha_bars", t)) * eps) / np.sqrt(guard(ab, "alpha_bar"))


def eps_from_x0(x_t, x0, t, s: NoiseSchedule, guard: Guard = NO_GUARD):
    """Invert q_sample for the noise given x0."""
    _same_shape(x_t, x0, "x_t/x0")
    ab = s.coef("alpha_bars", t)
    denom = guard(s.coef("one_minus_alpha_bars", t), "1-alpha_bar")
    return (x_t - np.sqrt(ab) * x0) / np.sqrt(denom)


def posterior_coefs(t, s: NoiseSchedule, guard: Guard = NO_GUARD):
    """Coefficients (on x0, on x_t) of the posterior mean of q(x_{t-1} | x_t, x0)."""
    ab_prev = s.coef("alpha_bar_prev", t)
    one_m_prev = 0.0 if np.ndim(t) == 0 and t == 1 else 1.0 - ab_prev
    if np.ndim(t):
        one_m_prev = np.where(np.asarray(t)[:, None] == 1, 0.0, 1.0 - ab_prev)
    denom = guard(s.coef("one_minus_alpha_bars", t), "1-alpha_bar")
    c_x0 = np.sqrt(ab_prev) * s.coef("betas", t) / denom
    c_xt = np.sqrt(s.coef("alphas", t)) * one_m_prev / denom
    return c_x0, c_xt


def posterior_mean_var(x_t, x0, t, s: NoiseSchedule, guard: Guard = NO_GUARD):
    """Mean and variance of q(x_{t-1} | x_t, x0)."""
    _same_shape(x_t, x0, "x_t/x0")
    c_x0, c_xt = posterior_coefs(t, s, guard)
    return c_x0 * x0 + c_xt * x_t, s.coef("betas_tilde", t)
