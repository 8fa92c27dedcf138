"""Noising schedules: construction, respacing and the numerical stability guard.

Timesteps are 1-based (t = 1..T) in every public function. Arrays stored on
:class:`NoiseSchedule` are 0-based, so ``betas[t - 1]`` is beta_t.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

COSINE_BETA_MAX = 0.999
DEFAULT_FLOOR = 1e-8


class ScheduleError(ValueError):
    pass


class StabilityError(FloatingPointError):
    """A division denominator fell below the stability floor with the guard off."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    source_indices: np.ndarray | None = None
    one_minus_alpha_bars: np.ndarray | None = None

    def __post_init__(self):
        if self.one_minus_alpha_bars is None:
            # (1 - abar_t) = (1 - abar_{t-1}) + abar_{t-1} beta_t avoids cancellation at small t
            prev = np.concatenate([[1.0], np.asarray(self.alpha_bars, np.float64)[:-1]])
            inc = prev * np.asarray(self.betas, np.float64)
            object.__setattr__(self, "one_minus_alpha_bars", np.cumsum(inc))
        for name in ("betas", "alphas", "alpha_bars", "one_minus_alpha_bars"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.source_indices is not None:
            idx = np.array(self.source_indices, dtype=np.int64)
            idx.setflags(write=False)
            object.__setattr__(self, "source_indices", idx)
        prev = np.concatenate([[1.0], self.alpha_bars[:-1]])
        object.__setattr__(self, "alpha_bar_prev", _frozen(prev))
        prev_1m = np.concatenate([[0.0], self.one_minus_alpha_bars[:-1]])
        tilde = prev_1m / self.one_minus_alpha_bars * self.betas
        object.__setattr__(self, "betas_tilde", _frozen(tilde))
        self._validate()

    def _validate(self):
        b, ab = self.betas, self.alpha_bars
        if b.ndim != 1 or len(b) < 1 or not (len(b) == len(self.alphas) == len(ab)):
            raise ScheduleError("schedule arrays must be 1-D with equal, non-zero length")
        if not np.all(np.isfinite(b)) or np.any(b <= 0) or np.any(b >= 1):
            raise ScheduleError("betas must lie strictly inside (0, 1)")
        if np.any(np.diff(np.concatenate([[1.0], ab])) >= 0):
            raise ScheduleError("alpha_bar must be strictly decreasing from alpha_bar_0 = 1")
        if self.source_indices is not None and len(self.source_indices) != len(b):
            raise ScheduleError("source_indices length must equal T")

    # ------------------------------------------------------------------
    @classmethod
    def from_betas(cls, betas, kind="custom", params=None) -> "NoiseSchedule":
        betas = np.asarray(betas, dtype=np.float64)
        alphas = 1.0 - betas
        return cls(betas, alphas, np.cumprod(alphas), kind, dict(params or {}))

    @classmethod
    def from_alpha_bars(cls, alpha_bars, kind="custom", params=None, source_indices=None,
                        one_minus_alpha_bars=None):
        ab = np.asarray(alpha_bars, dtype=np.float64)
        prev = np.concatenate([[1.0], ab[:-1]])
        # keep the ratio itself so alpha_t * alpha_bar_{t-1} == alpha_bar_t to an ulp
        alphas = ab / prev
        betas = 1.0 - alphas
        if one_minus_alpha_bars is not None:
            # first respaced step: beta must equal 1 - abar exactly
            betas[0] = one_minus_alpha_bars[0]
        return cls(betas, alphas, ab, kind, dict(params or {}), source_indices, one_minus_alpha_bars)

    @property
    def T(self) -> int:
        return len(self.betas)

    def model_timestep(self, t):
        """Timestep (1-based) in the original schedule that a denoiser was trained on."""
        if self.source_indices is None:
            return t
        return self.source_indices[np.asarray(t) - 1] + 1

    def coef(self, name: str, t):
        """Per-timestep scalar(s) ``name`` at 1-based ``t``.

        An integer ``t`` gives a float; an array of shape (N,) gives shape (N, 1)
        so the result broadcasts against (N, D) data.
        """
        arr = getattr(self, name)
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ScheduleError(f"timestep out of range 1..{self.T}: {t}")
        if t.ndim == 0:
            return float(arr[int(t) - 1])
        return arr[t - 1][:, None]

    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "betas": self.betas.tolist(),
            "kind": self.kind,
            "params": self.params,
            "source_indices": None if self.source_indices is None else self.source_indices.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "NoiseSchedule":
        d = json.loads(text)
        if len(d["betas"]) != d["T"]:
            raise ScheduleError("T does not match the number of betas")
        s = cls.from_betas(d["betas"], d.get("kind", "custom"), d.get("params"))
        if d.get("source_indices") is not None:
            s = cls(s.betas, s.alphas, s.alpha_bars, s.kind, s.params, d["source_indices"], s.one_minus_alpha_bars)
        return s


def _check_T(T):
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise ScheduleError(f"T must be an integer >= 2, got {T!r}")


def make_linear(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """beta_t rising linearly from ``beta_start`` (t=1) to ``beta_end`` (t=T)."""
    _check_T(T)
    if not (math.isfinite(beta_start) and math.isfinite(beta_end)):
        raise ScheduleError("beta endpoints must be finite")
    if not (0 < beta_start <= beta_end < 1):
        raise ScheduleError("need 0 < beta_start <= beta_end < 1")
    frac = np.arange(T, dtype=np.float64) / (T - 1)
    betas = beta_start + frac * (beta_end - beta_start)
    return NoiseSchedule.from_betas(betas, "linear", {"beta_start": beta_start, "beta_end": beta_end})


def cosine_f(u, T: int, s: float):
    return np.cos((np.asarray(u, dtype=np.float64) / T + s) / (1 + s) * np.pi / 2) ** 2


def make_cosine(T: int, s: float = 0.008) -> NoiseSchedule:
    """Cosine schedule: alpha_bar(t) = f(t) / f(0), betas clipped at 0.999."""
    _check_T(T)
    if not (math.isfinite(s) and s > 0):
        raise ScheduleError("cosine offset s must be > 0")
    f = cosine_f(np.arange(T + 1), T, s)
    ab = f / f[0]
    betas = np.minimum(1.0 - ab[1:] / ab[:-1], COSINE_BETA_MAX)
    return NoiseSchedule.from_betas(betas, "cosine", {"s": s})


def respace_indices(T: int, K: int) -> np.ndarray:
    """0-based original indices round((j+1)*T/K) - 1, rounding halves up."""
    j = np.arange(K)
    # exact integer form of floor((j+1)*T/K + 1/2)
    return (2 * (j + 1) * T + K) // (2 * K) - 1


def respace(s: NoiseSchedule, K: int) -> NoiseSchedule:
    """Keep K of the T timesteps at a uniform stride; the last one is always kept."""
    if not isinstance(K, (int, np.integer)) or not (1 <= K <= s.T):
        raise ScheduleError(f"respace needs 1 <= K <= T={s.T}, got {K!r}")
    base = s.source_indices if s.source_indices is not None else np.arange(s.T)
    if K == s.T:
        return NoiseSchedule(s.betas, s.alphas, s.alpha_bars, s.kind, s.params, base, s.one_minus_alpha_bars)
    idx = respace_indices(s.T, K)
    return NoiseSchedule.from_alpha_bars(s.alpha_bars[idx], s.kind, s.params, base[idx],
                                         s.one_minus_alpha_bars[idx])


# ----------------------------------------------------------------------
# stability guard


@dataclass(frozen=True)
class StabilityWarning:
    t: int
    quantity: str
    value: float

    def __str__(self):
        return f"t={self.t}: {self.quantity}={self.value:.3e} below floor"


def guard_stability(s: NoiseSchedule, floor: float = DEFAULT_FLOOR) -> list[StabilityWarning]:
    if not (floor > 0):
        raise ScheduleError("stability floor must be > 0")
    out = []
    for i, ab in enumerate(s.alpha_bars):
        if ab < floor:
            out.append(StabilityWarning(i + 1, "alpha_bar", float(ab)))
        if s.one_minus_alpha_bars[i] < floor:
            out.append(StabilityWarning(i + 1, "1-alpha_bar", float(s.one_minus_alpha_bars[i])))
    return out


@dataclass(frozen=True)
class Guard:
    """Denominator policy shared by every formula that divides by a schedule term.

    Disabled (the default) raises :class:`StabilityError` when a denominator is
    below ``floor``; enabled clamps it up to ``floor``.
    """

    floor: float = DEFAULT_FLOOR
    enabled: bool = False

    def __post_init__(self):
        if not (self.floor > 0):
            raise ScheduleError("stability floor must be > 0")

    def __call__(self, value, what: str = "denominator"):
        v = np.asarray(value, dtype=np.float64)
        if np.any(v < self.floor):
            if not self.enabled:
                raise StabilityError(f"{what} = {v.min():.3e} is below the stability floor {self.floor:g}")
            v = np.maximum(v, self.floor)
        return float(v) if v.ndim == 0 else v


NO_GUARD = Guard()
