"""Diagnostics on trained (or oracle) denoisers and the sample-quality metric.

Every Monte Carlo estimate comes with a standard error series named
``<series>_se`` so assertions can be phrased in units of estimator noise.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .forward import backtrace_x0, eps_from_x0, posterior_mean_var, q_sample
from .parameterization import mu_from_eps, mu_from_x
from .rng import Rng
from .sampler import SamplerConfig, fixed_r_profile_from_stats, generate
from .schedule import Guard, NoiseSchedule


@dataclass
class CurveSet:
    t_values: list
    series: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_values = [int(t) for t in self.t_values]
        for name, vals in self.series.items():
            if len(vals) != len(self.t_values):
                raise ValueError(f"series {name!r} has {len(vals)} entries for {len(self.t_values)} timesteps")

    def __getitem__(self, name):
        return np.asarray(self.series[name])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.series)
        w.writerow(["t", *names])
        for i, t in enumerate(self.t_values):
            w.writerow([t, *(repr(float(self.series[n][i])) for n in names)])
        return buf.getvalue()


def _mean_se(per_sample):
    per_sample = np.asarray(per_sample, np.float64)
    n = len(per_sample)
    se = per_sample.std(ddof=1) / np.sqrt(n) if n > 1 else float("nan")
    return float(per_sample.mean()), float(se)


def per_timestep_losses(model, dataset, s: NoiseSchedule, n_per_t: int = 256, t_values=None,
                        seed: int = 0, guard: Guard | None = None) -> CurveSet:
    """Per-t losses of both heads on the three targets: mu_tilde, eps and x0.

    The eps-path x0 comes from backtracing with eps_hat; the x-path eps is the
    noise implied by x_hat. Losses are per-element means.
    """
    if n_per_t < 2:
        raise ValueError("need at least two draws per timestep")
    guard = guard or Guard(enabled=True)
    dataset = np.asarray(dataset, np.float64)
    t_values = list(range(1, s.T + 1)) if t_values is None else [int(t) for t in t_values]
    names = ["mu_loss_eps", "mu_loss_x", "eps_loss_eps", "eps_loss_x", "x0_loss_eps", "x0_loss_x"]
    series = {n: [] for n in names}
    series.update({n + "_se": [] for n in names})
    rng = Rng(seed, 21)
    for t in t_values:
        sub = rng.child(t)
        x0 = dataset[sub.choice(len(dataset), n_per_t)]
        eps = sub.normal(x0.shape)
        x_t = q_sample(x0, t, eps, s)
        out = model(x_t, t)
        if not (np.all(np.isfinite(out.eps_hat)) and np.all(np.isfinite(out.x_hat))):
            raise FloatingPointError(f"model produced non-finite output at t={t}")
        eh = np.asarray(out.eps_hat, np.float64)
        xh = np.asarray(out.x_hat, np.float64)
        target, _ = posterior_mean_var(x_t, x0, t, s, guard)
        per = {
            "mu_loss_eps": mu_from_eps(x_t, eh, t, s, guard).mean - target,
            "mu_loss_x": mu_from_x(x_t, xh, t, s, guard).mean - target,
            "eps_loss_eps": eh - eps,
            "eps_loss_x": eps_from_x0(x_t, xh, t, s, guard) - eps,
            "x0_loss_eps": backtrace_x0(x_t, eh, t, s, guard) - x0,
            "x0_loss_x": xh - x0,
        }
        for n, err in per.items():
            m, se = _mean_se(np.mean(np.square(err), axis=1))
            series[n].append(m)
            series[n + "_se"].append(se)
    return CurveSet(t_values, series, {"n_per_t": n_per_t, "seed": seed})


PATH_MODES = {"eps": "eps_only", "x": "x_only"}


def predicted_x0_stats(model, s: NoiseSchedule, n_samples: int, cfg: SamplerConfig,
                       data=None) -> CurveSet:
    """Mean and variance of predicted x0 at every sampling step, for each path run on its own.

    Statistics pool all elements of all samples. ``data`` adds reference series.
    """
    series = {}
    t_values = None
    for path, mode in PATH_MODES.items():
        run_cfg = replace(cfg, mode=mode, fixed_r_profile=None)
        _, traj = generate(model, s, run_cfg, n_samples, record=True)
        preds = traj.pred_x0_eps if path == "eps" else traj.pred_x0_x
        series[f"pred_x0_mean_{path}"] = [float(np.mean(p)) for p in preds]
        series[f"pred_x0_var_{path}"] = [float(np.var(p)) for p in preds]
        t_values = traj.timesteps
    if data is not None:
        data = np.asarray(data, np.float64)
        series["data_mean"] = [float(data.mean())] * len(t_values)
        series["data_var"] = [float(data.var())] * len(t_values)
    return CurveSet(t_values, series, {"n_samples": n_samples, "seed": cfg.seed, "steps": cfg.steps})


def r_trajectory_stats(trajectories, min_count: int = 1) -> CurveSet:
    """Per-step mean / min / max of r over trajectories (and elements, for per-element r).

    Accepts a list of :class:`Trajectory` objects (batched runs are pooled).
    """
    if not trajectories:
        raise ValueError("no trajectories given")
    steps = len(trajectories[0].r_values)
    if steps == 0 or any(len(tr.r_values) != steps for tr in trajectories):
        raise ValueError("trajectories must all record r for the same number of steps")
    per_step = [np.concatenate([np.ravel(tr.r_values[j]) for tr in trajectories]) for j in range(steps)]
    n_traj = sum(len(tr.r_values[0]) for tr in trajectories)
    if n_traj < min_count:
        raise ValueError(f"need at least {min_count} trajectories, got {n_traj}")
    series = {
        "r_mean": [float(v.mean()) for v in per_step],
        "r_min": [float(v.min()) for v in per_step],
        "r_max": [float(v.max()) for v in per_step],
    }
    return CurveSet(trajectories[0].timesteps, series, {"n_trajectories": n_traj})


def wasserstein_1d(a, b) -> float:
    """Exact W1 between two 1-D empirical distributions (integral of |F_a - F_b|)."""
    a = np.sort(np.asarray(a, np.float64))
    b = np.sort(np.asarray(b, np.float64))
    if len(a) == len(b):
        return float(np.mean(np.abs(a - b)))
    grid = np.sort(np.concatenate([a, b]))
    widths = np.diff(grid)
    fa = np.searchsorted(a, grid[:-1], side="right") / len(a)
    fb = np.searchsorted(b, grid[:-1], side="right") / len(b)
    return float(np.sum(np.abs(fa - fb) * widths))


def random_directions(n_proj: int, D: int, seed: int) -> np.ndarray:
    u = Rng(seed, 31).normal((n_proj, D))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def sliced_wasserstein(A, B, n_proj: int = 128, seed: int = 0) -> float:
    """Mean 1-D Wasserstein-1 distance over ``n_proj`` seeded random unit directions."""
    A = np.atleast_2d(np.asarray(A, np.float64))
    B = np.atleast_2d(np.asarray(B, np.float64))
    if len(A) == 0 or len(B) == 0:
        raise ValueError("sample sets must be non-empty")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if n_proj < 32:
        raise ValueError("use at least 32 projections")
    u = random_directions(n_proj, A.shape[1], seed)
    pa, pb = A @ u.T, B @ u.T
    if len(A) == len(B):
        return float(np.mean(np.abs(np.sort(pa, axis=0) - np.sort(pb, axis=0))))
    return float(np.mean([wasserstein_1d(pa[:, k], pb[:, k]) for k in range(n_proj)]))


REPORT_MODES = ("dual", "fixed_r", "eps_only", "x_only")


def collect_r_profile(model, s: NoiseSchedule, cfg: SamplerConfig, n_traj: int = 64, seed: int = 1000):
    """Mean r per step over ``n_traj`` dual trajectories, as a frozen profile."""
    run = replace(cfg, mode="dual", fixed_r_profile=None, seed=seed)
    _, traj = generate(model, s, run, n_traj, record=True)
    stats = r_trajectory_stats([traj], min_count=n_traj)
    return fixed_r_profile_from_stats(stats["r_mean"], cfg.steps)


def compare_paths_report(model, s: NoiseSchedule, step_counts, cfg_base: SamplerConfig, heldout,
                         n_samples: int = 4000, n_proj: int = 128, n_traj: int = 64,
                         modes=REPORT_MODES) -> list[dict]:
    """Sliced-Wasserstein to held-out data for each (steps, mode) pair.

    All modes at one step count share the sampler seed, hence the same x_T.
    """
    rows = []
    for K in step_counts:
        base = replace(cfg_base, steps=int(K), mode="dual", fixed_r_profile=None)
        profile = collect_r_profile(model, s, base, n_traj, seed=cfg_base.seed + 1000) if "fixed_r" in modes else None
        for mode in modes:
            cfg = replace(base, mode=mode, fixed_r_profile=profile if mode == "fixed_r" else None)
            x, _ = generate(model, s, cfg, n_samples)
            swd = sliced_wasserstein(x, heldout, n_proj, seed=cfg_base.seed)
            rows.append({"steps": int(K), "mode": mode, "swd": swd, "n_samples": n_samples,
                         "seed": cfg_base.seed})
    return rows


def report_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["steps", "mode", "swd", "n_samples", "seed"])
    for r in rows:
        w.writerow([r["steps"], r["mode"], repr(r["swd"]), r["n_samples"], r["seed"]])
    return buf.getvalue()


def report_to_json(rows, config: dict | None = None) -> str:
    return json.dumps({"config": config or {}, "rows": rows}, indent=2, sort_keys=True)
