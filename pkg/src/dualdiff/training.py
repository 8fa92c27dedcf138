"""Three-part training objective, Adam and parameter EMA.

The interpolation loss treats both head-derived means as constants, so its
gradient reaches the network only through the r head.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .denoiser import LAYER_ORDER, DenoiserParams, backward, forward
from .forward import posterior_mean_var, q_sample
from .parameterization import mu_from_eps, mu_from_x
from .rng import Rng
from .schedule import NO_GUARD, Guard, NoiseSchedule


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass
class LossBreakdown:
    l_eps: float
    l_x: float
    l_mu: float
    total: float
    lambdas: tuple = (1.0, 1.0, 1.0)
    mean_r: float = float("nan")


def _mse(a, b, what):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"shape mismatch in {what}: {np.shape(a)} vs {np.shape(b)}")
    return float(np.mean(np.square(np.asarray(a, np.float64) - np.asarray(b, np.float64))))


def loss_eps(eps_true, eps_hat) -> float:
    return _mse(eps_true, eps_hat, "loss_eps")


def loss_x(x0_true, x_hat) -> float:
    return _mse(x0_true, x_hat, "loss_x")


@dataclass
class MuLoss:
    value: float
    d_r: np.ndarray
    target: np.ndarray
    mu_x: np.ndarray
    mu_eps: np.ndarray


def loss_mu_stopgrad(x_t, x0_true, eps_hat, x_hat, r, t, s: NoiseSchedule,
                     guard: Guard = NO_GUARD) -> MuLoss:
    """||mu_tilde - (r sg[mu_x] + (1-r) sg[mu_eps])||^2 averaged over elements.

    ``d_r`` is the gradient w.r.t. r; the gradients w.r.t. both heads are zero
    by construction and are never produced.
    """
    x_t = np.asarray(x_t, np.float64)
    target, _ = posterior_mean_var(x_t, np.asarray(x0_true, np.float64), t, s, guard)
    mx = mu_from_x(x_t, np.asarray(x_hat, np.float64), t, s, guard).mean
    me = mu_from_eps(x_t, np.asarray(eps_hat, np.float64), t, s, guard).mean
    r = np.asarray(r, np.float64)
    resid = target - (r * mx + (1.0 - r) * me)
    value = float(np.mean(np.square(resid)))
    g = -2.0 * resid * (mx - me) / resid.size
    if r.shape != g.shape:
        g = g.sum(axis=1, keepdims=True)
    return MuLoss(value, g, target, mx, me)


def total_loss(parts, lambdas=(1.0, 1.0, 1.0)) -> LossBreakdown:
    if any(l < 0 for l in lambdas):
        raise ValueError("loss weights must be non-negative")
    l_eps, l_x, l_mu = parts
    total = lambdas[0] * l_eps + lambdas[1] * l_x + lambdas[2] * l_mu
    return LossBreakdown(l_eps, l_x, l_mu, total, tuple(lambdas))


def loss_and_grads(params: DenoiserParams, x0, t, eps, s: NoiseSchedule,
                   lambdas=(1.0, 1.0, 1.0), guard: Guard = NO_GUARD):
    """Full objective on a fixed (x0, t, eps) draw and its stop-grad gradient."""
    x_t = q_sample(x0, t, eps, s)
    out, cache = forward(params, x_t, t)
    mu = loss_mu_stopgrad(x_t, x0, out.eps_hat, out.x_hat, out.r, t, s, guard)
    br = total_loss((loss_eps(eps, out.eps_hat), loss_x(x0, out.x_hat), mu.value), lambdas)
    br.mean_r = float(np.mean(out.r))
    if not math.isfinite(br.total):
        raise TrainingDivergedError(f"non-finite loss: l_eps={br.l_eps} l_x={br.l_x} l_mu={br.l_mu}")
    n = np.asarray(eps).size
    d_eps = lambdas[0] * 2.0 * (out.eps_hat - eps) / n
    d_x = lambdas[1] * 2.0 * (out.x_hat - x0) / n
    grads = backward(params, cache, d_eps, d_x, lambdas[2] * mu.d_r)
    return br, grads


class Adam:
    def __init__(self, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, params: DenoiserParams, grads: dict):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k in LAYER_ORDER:
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            update = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            params.weights[k] = (params.weights[k] - update).astype(params.dtype, copy=False)
        params.touch()


def ema_update(ema: DenoiserParams, params: DenoiserParams, decay: float) -> DenoiserParams:
    """ema <- decay * ema + (1 - decay) * params, in place."""
    if not 0.0 <= decay < 1.0:
        raise ValueError("EMA decay must lie in [0, 1)")
    for k in LAYER_ORDER:
        ema.weights[k] = (decay * ema.weights[k] + (1.0 - decay) * params.weights[k]).astype(
            ema.weights[k].dtype, copy=False)
    ema.touch()
    return ema


def ema_decay_at(step: int, decay: float, warmup: bool) -> float:
    """Effective decay after ``step`` updates; warmup caps it at (1+n)/(10+n)."""
    if not warmup:
        return decay
    return min(decay, (1.0 + step) / (10.0 + step))


def sample_timesteps(rng: Rng, n: int, T: int) -> np.ndarray:
    return rng.integers(1, T, size=n)


def train_step(params: DenoiserParams, batch_x0, s: NoiseSchedule, rng: Rng, opt: Adam,
               lambdas=(1.0, 1.0, 1.0), guard: Guard = NO_GUARD, step: int | None = None):
    """One optimizer update on a minibatch; timesteps are drawn per element."""
    x0 = np.asarray(batch_x0, np.float64)
    t = sample_timesteps(rng, len(x0), s.T)
    eps = rng.normal(x0.shape)
    try:
        br, grads = loss_and_grads(params, x0, t, eps, s, lambdas, guard)
    except TrainingDivergedError as e:
        raise TrainingDivergedError(f"step {step}: {e}") from e
    opt.step(params, grads)
    return params, br


@dataclass
class TrainResult:
    params: DenoiserParams
    ema: DenoiserParams
    log: list = field(default_factory=list)
    steps: int = 0


LOG_COLUMNS = ("step", "l_eps", "l_x", "l_mu", "total", "mean_r")


def train(params: DenoiserParams, data, s: NoiseSchedule, steps: int, batch: int = 128,
          lr: float = 2e-4, ema_decay: float = 0.9999, ema_warmup: bool = True, seed: int = 0,
          lambdas=(1.0, 1.0, 1.0), guard: Guard = NO_GUARD, log_every: int = 100,
          progress=None) -> TrainResult:
    """Minibatch training on a fixed data array; minibatches drawn with replacement."""
    data = np.asarray(data, np.float64)
    ema = params.copy()
    opt = Adam(lr)
    rng = Rng(seed, 1)
    result = TrainResult(params, ema)
    for i in range(steps):
        idx = rng.choice(len(data), batch)
        _, br = train_step(params, data[idx], s, rng, opt, lambdas, guard, step=i + 1)
        ema_update(ema, params, ema_decay_at(i, ema_decay, ema_warmup))
        if (i + 1) % log_every == 0 or i == 0 or i + 1 == steps:
            result.log.append((i + 1, br.l_eps, br.l_x, br.l_mu, br.total, br.mean_r))
            if progress is not None:
                progress(result.log[-1])
    result.steps = steps
    return result
