"""Curves behind the three diagnostic plots, from a training output directory.

    python scripts/figure_curves.py runs/gauss8 --out runs/gauss8/curves

Writes
    mu_losses.csv     per-t losses of both heads (mu, eps and x0 targets)
    pred_x0.csv       mean / variance of predicted x0 per sampling step, each path run alone
    r_profile.csv     mean / min / max of r per step over dual trajectories
and prints the three direction checks.
"""
import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from dualdiff.analysis import per_timestep_losses, predicted_x0_stats, r_trajectory_stats
from dualdiff.cli import _load_model, heldout_data
from dualdiff.data import dataset_sample
from dualdiff.sampler import generate


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("run", help="training output directory or checkpoint")
    ap.add_argument("--out", required=True)
    ap.add_argument("--raw", action="store_true")
    ap.add_argument("--n-per-t", type=int, default=2000)
    ap.add_argument("--n-samples", type=int, default=4000)
    ap.add_argument("--steps", type=int, help="sampling steps for the x0 and r curves (default T)")
    args = ap.parse_args()

    model, cfg, _ = _load_model(args.run, args.raw)
    s = cfg.make_schedule()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    held = heldout_data(cfg)
    train_data = dataset_sample(cfg.dataset, cfg.n_train, cfg.seed, cfg.point_c)
    scfg = cfg.sampler_config(steps=args.steps or s.T)

    losses = per_timestep_losses(model, held, s, args.n_per_t, seed=cfg.seed)
    (out / "mu_losses.csv").write_text(losses.to_csv())
    x0 = predicted_x0_stats(model, s, args.n_samples, scfg, train_data)
    (out / "pred_x0.csv").write_text(x0.to_csv())
    _, traj = generate(model, s, replace(scfg, mode="dual"), args.n_samples, record=True)
    r = r_trajectory_stats([traj])
    (out / "r_profile.csv").write_text(r.to_csv())

    late = np.asarray(losses.t_values) >= 0.8 * s.T
    ratio = losses["mu_loss_eps"][late] / losses["mu_loss_x"][late]
    k = max(1, len(r.t_values) // 10)
    print(f"mu-loss eps/x ratio for t >= 0.8T: min {ratio.min():.2f}, median {np.median(ratio):.2f}")
    print(f"pred-x0 variance at first step: eps {x0['pred_x0_var_eps'][0]:.3f}, "
          f"x {x0['pred_x0_var_x'][0]:.3f}, data {x0['data_var'][0]:.3f}")
    print(f"mean r first 10% {r['r_mean'][:k].mean():.3f}, last 10% {r['r_mean'][-k:].mean():.3f}")


if __name__ == "__main__":
    main()
