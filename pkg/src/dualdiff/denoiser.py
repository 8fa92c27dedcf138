"""Three-headed MLP denoiser with hand-written reverse-mode gradients.

Layout of the last layer's outputs (the channel contract):

    [0, D)      eps_hat
    [D, 2D)     x_hat
    [2D, 2D+R)  r logit, R = 1 (r per sample) or D (r per element)

Weights are stored as ``W{i}`` with shape (fan_in, fan_out) and ``b{i}`` with
shape (fan_out,), layer order W0 b0 W1 b1 W2 b2 W3 b3.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .forward import eps_from_x0
from .rng import Rng
from .schedule import Guard, NoiseSchedule

N_LAYERS = 4
LAYER_ORDER = tuple(f"{k}{i}" for i in range(N_LAYERS) for k in ("W", "b"))
R_MODES = ("sample", "element")
# r-head weights start this much smaller than the fan-in bound so r starts near 0.5
R_INIT_SCALE = 1e-2

_version = itertools.count(1)


class StaleCacheError(RuntimeError):
    pass


@dataclass
class DenoiserParams:
    D: int
    H: int
    E: int
    T: int
    r_mode: str = "sample"
    weights: dict = field(default_factory=dict)
    version: int = 0

    @property
    def r_width(self) -> int:
        return 1 if self.r_mode == "sample" else self.D

    @property
    def out_width(self) -> int:
        return 2 * self.D + self.r_width

    @property
    def dtype(self):
        return self.weights["W0"].dtype

    def shapes(self) -> dict:
        dims = [self.D + self.E, self.H, self.H, self.H, self.out_width]
        out = {}
        for i in range(N_LAYERS):
            out[f"W{i}"] = (dims[i], dims[i + 1])
            out[f"b{i}"] = (dims[i + 1],)
        return out

    def touch(self):
        """Mark the weights as modified; invalidates forward caches."""
        self.version = next(_version)

    def copy(self) -> "DenoiserParams":
        p = DenoiserParams(self.D, self.H, self.E, self.T, self.r_mode,
                           {k: v.copy() for k, v in self.weights.items()})
        p.touch()
        return p

    def astype(self, dtype) -> "DenoiserParams":
        p = self.copy()
        p.weights = {k: v.astype(dtype) for k, v in p.weights.items()}
        return p

    def hyper(self) -> dict:
        return {"D": self.D, "H": self.H, "E": self.E, "T": self.T, "r_mode": self.r_mode}

    def validate(self):
        if self.r_mode not in R_MODES:
            raise ValueError(f"unknown r_mode {self.r_mode!r}")
        for k, shp in self.shapes().items():
            w = self.weights.get(k)
            if w is None or w.shape != shp:
                raise ValueError(f"parameter {k} missing or has wrong shape (want {shp})")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"parameter {k} has non-finite entries")


def init_params(D: int, H: int = 128, E: int = 32, seed: int = 0, T: int = 1000,
                r_mode: str = "sample", dtype=np.float32) -> DenoiserParams:
    """Fan-in scaled uniform init: every weight and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    The r-head column is further scaled by ``R_INIT_SCALE`` and its bias is zero.
    """
    if min(D, H, E) < 1:
        raise ValueError("D, H and E must be >= 1")
    p = DenoiserParams(D, H, E, T, r_mode)
    rng = Rng(seed)
    for k in LAYER_ORDER:
        shape = p.shapes()[k]
        fan_in = p.shapes()["W" + k[1:]][0]
        bound = 1.0 / np.sqrt(fan_in)
        p.weights[k] = rng.uniform(shape, -bound, bound)
    last = N_LAYERS - 1
    p.weights[f"W{last}"][:, 2 * D:] *= R_INIT_SCALE
    p.weights[f"b{last}"][2 * D:] = 0.0
    p.weights = {k: v.astype(dtype) for k, v in p.weights.items()}
    p.validate()
    p.touch()
    return p


def time_embedding(t, T: int, E: int, check: bool = True) -> np.ndarray:
    """Sinusoidal embedding: [sin(t w_0..w_{E/2-1}), cos(t w_0..)] with w_i = 10000^(-2i/E).

    Returns shape (E,) for scalar ``t`` and (N, E) for an array.
    """
    if E % 2:
        raise ValueError("time embedding width must be even")
    t = np.asarray(t, dtype=np.float64)
    if check and (np.any(t < 1) or np.any(t > T)):
        raise ValueError(f"timestep out of range 1..{T}")
    freqs = 10000.0 ** (-2.0 * np.arange(E // 2) / E)
    ang = t[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _silu(a):
    return a * _sigmoid(a)


def _silu_grad(a):
    s = _sigmoid(a)
    return s * (1.0 + a * (1.0 - s))


@dataclass
class ModelOutput:
    eps_hat: np.ndarray
    x_hat: np.ndarray
    r: np.ndarray
    r_logit: np.ndarray | None = None


def forward(params: DenoiserParams, x, t):
    """Evaluate the denoiser on a batch. Returns (ModelOutput, cache)."""
    x = np.atleast_2d(np.asarray(x))
    if x.shape[1] != params.D:
        raise ValueError(f"input dimension {x.shape[1]} does not match D={params.D}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite denoiser input")
    n = x.shape[0]
    t = np.broadcast_to(np.asarray(t), (n,))
    dt = params.dtype
    emb = time_embedding(t, params.T, params.E).astype(dt)
    h = np.concatenate([x.astype(dt), emb], axis=1)
    w = params.weights
    inputs, pre = [h], []
    for i in range(N_LAYERS - 1):
        a = h @ w[f"W{i}"] + w[f"b{i}"]
        h = _silu(a)
        pre.append(a)
        inputs.append(h)
    out = h @ w[f"W{N_LAYERS - 1}"] + w[f"b{N_LAYERS - 1}"]
    D = params.D
    logit = out[:, 2 * D:]
    r = _sigmoid(logit)
    cache = {"inputs": inputs, "pre": pre, "r": r, "version": params.version, "n": n}
    return ModelOutput(out[:, :D], out[:, D:2 * D], r, logit), cache


def backward(params: DenoiserParams, cache, d_eps=None, d_x=None, d_r=None) -> dict:
    """Gradients of a scalar loss w.r.t. every weight, given its gradients w.r.t. the heads.

    ``d_r`` is the gradient w.r.t. r itself (after the logistic).
    """
    if cache["version"] != params.version:
        raise StaleCacheError("forward cache does not belong to the current parameters")
    n, D, dt = cache["n"], params.D, params.dtype
    g_out = np.zeros((n, params.out_width), dtype=dt)
    if d_eps is not None:
        g_out[:, :D] = d_eps
    if d_x is not None:
        g_out[:, D:2 * D] = d_x
    if d_r is not None:
        r = cache["r"]
        g_out[:, 2 * D:] = d_r * r * (1.0 - r)
    w = params.weights
    grads = {}
    g = g_out
    for i in range(N_LAYERS - 1, -1, -1):
        grads[f"W{i}"] = cache["inputs"][i].T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        if i > 0:
            g = (g @ w[f"W{i}"].T) * _silu_grad(cache["pre"][i - 1])
    return {k: grads[k].astype(dt, copy=False) for k in LAYER_ORDER}


class Denoiser:
    """Callable model wrapper: ``model(x, t) -> ModelOutput`` with t in the training timesteps."""

    def __init__(self, params: DenoiserParams):
        params.validate()
        self.params = params

    @property
    def D(self):
        return self.params.D

    def __call__(self, x, t) -> ModelOutput:
        return forward(self.params, x, t)[0]


class OracleDenoiser:
    """Bayes-optimal heads for the single-point dataset {c}."""

    def __init__(self, c, s: NoiseSchedule, guard: Guard | None = None):
        self.c = np.asarray(c, dtype=np.float64).reshape(-1)
        self.s = s
        self.guard = guard or Guard(enabled=True)

    @property
    def D(self):
        return len(self.c)

    def __call__(self, x, t) -> ModelOutput:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        t = t if np.ndim(t) == 0 else np.asarray(t)
        x0 = np.broadcast_to(self.c, x.shape)
        eps = eps_from_x0(x, x0, t, self.s, self.guard)
        return ModelOutput(eps, x0.copy(), np.full((n, 1), 0.5))


def oracle_denoiser(c, s: NoiseSchedule, guard: Guard | None = None) -> OracleDenoiser:
    return OracleDenoiser(c, s, guard)
