"""Experiment configuration as flat ``key = value`` text.

Blank lines and ``#`` comments are ignored; tuples are comma separated;
booleans are true/false. Unknown keys are an error. ``config_echo`` writes
every key back out in declaration order, which is also what gets hashed.
"""
from __future__ import annotations

import dataclasses
import hashlib
import typing
from dataclasses import dataclass, fields

from .data import DATASETS, dataset_dim
from .sampler import METHODS, MODES, SIGMA_RULES, SamplerConfig
from .schedule import NoiseSchedule, make_cosine, make_linear


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # data
    dataset: str = "gauss8"
    n_train: int = 50000
    point_c: tuple = (0.0, 0.0)
    # schedule
    schedule: str = "linear"
    T: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.2
    cosine_s: float = 0.008
    # model
    hidden: int = 128
    emb: int = 32
    r_mode: str = "sample"
    # training
    steps: int = 10000
    batch: int = 128
    lr: float = 2e-4
    ema_decay: float = 0.9999
    ema_warmup: bool = True
    seed: int = 0
    lambda_eps: float = 1.0
    lambda_x: float = 1.0
    lambda_mu: float = 1.0
    log_every: int = 100
    # sampling / evaluation
    mode: str = "dual"
    method: str = "implicit"
    sample_steps: int = 10
    sigma_rule: str = "zero"
    eta: float = 0.0
    clamp: bool = False
    clamp_lo: float = -1.0
    clamp_hi: float = 1.0
    guard: bool = False
    guard_floor: float = 1e-8
    n_samples: int = 1000
    sample_seed: int = 0
    n_heldout: int = 5000
    n_proj: int = 128
    out_dir: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.schedule not in ("linear", "cosine"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.mode not in MODES or self.method not in METHODS or self.sigma_rule not in SIGMA_RULES:
            raise ConfigError("invalid sampler mode, method or sigma rule")
        if self.mode == "fixed_r":
            raise ConfigError("fixed_r profiles are collected at run time; use the compare report")
        for name in ("T", "hidden", "emb", "batch", "n_train", "sample_steps", "log_every", "n_heldout"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.emb % 2:
            raise ConfigError("emb must be even")
        if self.steps < 0 or self.n_samples < 0:
            raise ConfigError("steps and n_samples must be >= 0")
        if not 0 <= self.ema_decay < 1:
            raise ConfigError("ema_decay must lie in [0, 1)")
        if min(self.lambda_eps, self.lambda_x, self.lambda_mu) < 0 or self.lr < 0:
            raise ConfigError("loss weights and learning rate must be >= 0")

    @property
    def D(self) -> int:
        return dataset_dim(self.dataset, self.point_c)

    @property
    def lambdas(self) -> tuple:
        return (self.lambda_eps, self.lambda_x, self.lambda_mu)

    def make_schedule(self) -> NoiseSchedule:
        if self.schedule == "linear":
            return make_linear(self.T, self.beta_start, self.beta_end)
        return make_cosine(self.T, self.cosine_s)

    def sampler_config(self, **overrides) -> SamplerConfig:
        kw = dict(mode=self.mode, method=self.method, steps=self.sample_steps, sigma_rule=self.sigma_rule,
                  eta=self.eta, clamp=self.clamp, clamp_lo=self.clamp_lo, clamp_hi=self.clamp_hi,
                  seed=self.sample_seed, guard=self.guard, guard_floor=self.guard_floor)
        kw.update(overrides)
        return SamplerConfig(**kw)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_HINTS = typing.get_type_hints(ExperimentConfig)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key, raw: str):
    typ = _HINTS[key]
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is tuple:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {raw!r} as {typ.__name__}") from None


def parse_config(text: str, **overrides) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in _HINTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    for key, v in overrides.items():
        if key not in _HINTS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(key, v) if isinstance(v, str) else v
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), **overrides)


def config_echo(cfg: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {_fmt(getattr(cfg, f.name))}\n" for f in fields(cfg))


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of everything except the output location."""
    text = config_echo(cfg.replace(out_dir=""))
    return hashlib.sha256(text.encode()).hexdigest()[:16]
