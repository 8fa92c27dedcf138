"""Backward-step means from either denoiser head, and their interpolation.

``subtractive`` is the path driven by the noise prediction, ``additive`` the
path driven by the direct x0 prediction. The ``ddim_*`` estimators are the
implicit-sampler counterparts of ``mu_from_*``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import _same_shape, posterior_coefs
from .schedule import NO_GUARD, Guard, NoiseSchedule

SUBTRACTIVE = "subtractive"
ADDITIVE = "additive"
DUAL = "dual"


@dataclass
class MuEstimate:
    mean: np.ndarray
    path: str
    r_used: np.ndarray | None = None


def mu_from_x(x_t, x_pred, t, s: NoiseSchedule, guard: Guard = NO_GUARD) -> MuEstimate:
    _same_shape(x_t, x_pred, "x_t/x_pred")
    c_x0, c_xt = posterior_coefs(t, s, guard)
    return MuEstimate(c_xt * x_t + c_x0 * x_pred, ADDITIVE)


def mu_from_eps(x_t, eps_pred, t, s: NoiseSchedule, guard: Guard = NO_GUARD) -> MuEstimate:
    _same_shape(x_t, eps_pred, "x_t/eps_pred")
    a = s.coef("alphas", t)
    sqrt_a = np.sqrt(guard(a, "alpha"))
    sqrt_1m_ab = np.sqrt(guard(s.coef("one_minus_alpha_bars", t), "1-alpha_bar"))
    mean = x_t / sqrt_a - (1.0 - a) / (sqrt_1m_ab * sqrt_a) * eps_pred
    return MuEstimate(mean, SUBTRACTIVE)


def check_r(r):
    r = np.asarray(r)
    if np.any(~np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
        raise ValueError("interpolation weight r must lie in [0, 1]")
    return r


def interpolate_mu(mu_x: MuEstimate, mu_eps: MuEstimate, r) -> MuEstimate:
    """r * mu_x + (1 - r) * mu_eps, r broadcast per sample or per element."""
    r = check_r(r)
    mean = r * mu_x.mean + (1.0 - r) * mu_eps.mean
    return MuEstimate(mean, DUAL, r)


def _ddim_noise_coef(t, s: NoiseSchedule, sigma_t):
    ab_prev = s.coef("alpha_bar_prev", t)
    sig2 = np.square(sigma_t)
    rem = 1.0 - ab_prev - sig2
    # tolerate rounding when sigma_t^2 was computed as exactly 1 - abar_{t-1}
    if np.any(sig2 < 0) or np.any(rem < -1e-12):
        raise ValueError("sigma_t^2 must lie in [0, 1 - alpha_bar_{t-1}]")
    return np.sqrt(ab_prev), np.sqrt(np.maximum(rem, 0.0))


def ddim_mean_from_x(x_t, x_pred, t, s: NoiseSchedule, sigma_t=0.0, guard: Guard = NO_GUARD) -> MuEstimate:
    _same_shape(x_t, x_pred, "x_t/x_pred")
    c0, ce = _ddim_noise_coef(t, s, sigma_t)
    ab = s.coef("alpha_bars", t)
    eps_hat = (x_t - np.sqrt(ab) * x_pred) / np.sqrt(guard(s.coef("one_minus_alpha_bars", t), "1-alpha_bar"))
    return MuEstimate(c0 * x_pred + ce * eps_hat, ADDITIVE)


def ddim_mean_from_eps(x_t, eps_pred, t, s: NoiseSchedule, sigma_t=0.0, guard: Guard = NO_GUARD) -> MuEstimate:
    _same_shape(x_t, eps_pred, "x_t/eps_pred")
    c0, ce = _ddim_noise_coef(t, s, sigma_t)
    ab = s.coef("alpha_bars", t)
    x0_hat = (x_t - np.sqrt(s.coef("one_minus_alpha_bars", t)) * eps_pred) / np.sqrt(guard(ab, "alpha_bar"))
    return MuEstimate(c0 * x0_hat + ce * eps_pred, SUBTRACTIVE)


def clamp_x0(x_pred, lo: float = -1.0, hi: float = 1.0, enabled: bool = True):
    if not lo < hi:
        raise ValueError("clamp bounds need lo < hi")
    if not enabled:
        return x_pred
    return np.clip(x_pred, lo, hi)
