"""Command line driver: ``dualdiff {train,sample,diagnose,compare}``."""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .config import ConfigError, config_echo, config_hash, load_config, parse_config
from .data import dataset_sample
from .denoiser import Denoiser, init_params, oracle_denoiser
from .sampler import SamplerConfig, SamplingError, generate
from .schedule import StabilityError, guard_stability
from .tensorio import TensorFileError, read_checkpoint, write_checkpoint, write_tensor_file
from .training import LOG_COLUMNS, TrainingDivergedError, train

log = logging.getLogger("dualdiff")

HELDOUT_SEED_OFFSET = 1_000_003
CKPT_RAW = "model.ckpt"
CKPT_EMA = "model_ema.ckpt"


def _write_text(path: Path, text: str):
    path.write_text(text, newline="\n")


def training_log_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for step, *vals in rows:
        w.writerow([step, *(repr(float(v)) for v in vals)])
    return buf.getvalue()


def heldout_data(cfg):
    return dataset_sample(cfg.dataset, cfg.n_heldout, cfg.seed + HELDOUT_SEED_OFFSET, cfg.point_c)


# ----------------------------------------------------------------------


def cmd_train(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        log.error("config file not found: %s", path)
        return 2
    try:
        cfg = load_config(path, **_overrides(args.set))
    except ConfigError as e:
        log.error("bad config: %s", e)
        return 2
    out = Path(args.out or cfg.out_dir)
    s = cfg.make_schedule()
    for w in guard_stability(s, cfg.guard_floor):
        log.warning("schedule: %s", w)
    data = dataset_sample(cfg.dataset, cfg.n_train, cfg.seed, cfg.point_c)
    params = init_params(cfg.D, cfg.hidden, cfg.emb, cfg.seed, cfg.T, cfg.r_mode)
    try:
        res = train(params, data, s, cfg.steps, cfg.batch, cfg.lr, cfg.ema_decay, cfg.ema_warmup, cfg.seed,
                    cfg.lambdas, cfg.sampler_config().guard_policy, cfg.log_every,
                    progress=lambda row: log.info("step %d total %.5f mean_r %.3f", row[0], row[4], row[5]))
    except (TrainingDivergedError, StabilityError) as e:
        log.error("training aborted: %s", e)
        return 3
    h = config_hash(cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_text(out / "config.txt", config_echo(cfg))
        _write_text(out / "train_log.csv", training_log_csv(res.log))
        extra = {"config": config_echo(cfg.replace(out_dir=""))}
        write_checkpoint(out / CKPT_RAW, res.params, cfg.seed, h, res.steps, **extra)
        write_checkpoint(out / CKPT_EMA, res.ema, cfg.seed, h, res.steps, **extra)
    except OSError as e:
        log.error("could not write outputs: %s", e)
        return 4
    log.info("wrote %s", out)
    return 0


def _load_model(checkpoint, raw=False):
    """(model, cfg, header) from a checkpoint file or a training output directory."""
    p = Path(checkpoint)
    if p.is_dir():
        p = p / (CKPT_RAW if raw else CKPT_EMA)
    params, header = read_checkpoint(p)
    cfg = parse_config(header.get("config", ""))
    return Denoiser(params), cfg, header


def _sampler_cfg(cfg, args, **kw) -> SamplerConfig:
    over = {}
    for name in ("mode", "method", "sigma_rule", "eta", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    if getattr(args, "clamp", False):
        over["clamp"] = True
    if getattr(args, "guard", False):
        over["guard"] = True
    over.update(kw)
    return cfg.sampler_config(**over)


def cmd_sample(args) -> int:
    try:
        model, cfg, header = _load_model(args.checkpoint, args.raw)
    except (OSError, TensorFileError) as e:
        log.error("cannot load checkpoint: %s", e)
        return 2
    s = cfg.make_schedule()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    steps = args.steps or [cfg.sample_steps]
    n = cfg.n_samples if args.n is None else args.n
    for K in steps:
        try:
            scfg = _sampler_cfg(cfg, args, steps=K)
            x, traj = generate(model, s, scfg, n, record=args.trajectories)
        except (SamplingError, ValueError) as e:
            log.error("sampling failed: %s", e)
            return 3
        echo = {k: getattr(scfg, k) for k in ("mode", "method", "steps", "sigma_rule", "eta", "clamp", "guard")}
        write_tensor_file(out / f"samples_{scfg.mode}_K{K}.f32", x.astype(np.float32), scfg.seed,
                          header.get("config_hash"), sampler=echo)
        if args.trajectories and n:
            tdir = out / f"traj_{scfg.mode}_K{K}"
            tdir.mkdir(exist_ok=True)
            for i in range(n):
                rec = traj.sample(i)
                st = rec["states"]
                packed = np.concatenate([st[:-1], st[1:], rec["pred_x0"], rec["r_values"]], axis=1)
                write_tensor_file(tdir / f"sample_{i:05d}.f32", packed.astype(np.float32), scfg.seed,
                                  header.get("config_hash"), sampler=echo, timesteps=traj.timesteps,
                                  columns=["x_t"] * model.D + ["x_prev"] * model.D + ["pred_x0"] * model.D
                                  + ["r"] * rec["r_values"].shape[1])
    return 0


def _diagnose_model(args):
    if args.oracle:
        c = tuple(float(v) for v in args.c.split(","))
        cfg = parse_config("", dataset="point", point_c=c, T=args.T, n_samples=args.n_samples)
        s = cfg.make_schedule()
        return oracle_denoiser(c, s), cfg, {"config_hash": config_hash(cfg)}
    return _load_model(args.checkpoint, args.raw)


def cmd_diagnose(args) -> int:
    try:
        model, cfg, header = _diagnose_model(args)
    except (OSError, TensorFileError, ConfigError) as e:
        log.error("cannot load model: %s", e)
        return 2
    s = cfg.make_schedule()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = heldout_data(cfg)
    scfg = _sampler_cfg(cfg, args, steps=args.sample_steps or cfg.sample_steps)
    try:
        t_values = range(1, s.T + 1, args.t_stride)
        losses = analysis.per_timestep_losses(model, data, s, args.n_per_t, t_values, seed=cfg.seed)
        _write_text(out / "losses.csv", losses.to_csv())
        x0 = analysis.predicted_x0_stats(model, s, args.n_samples, scfg, data)
        _write_text(out / "pred_x0_stats.csv", x0.to_csv())
        _, traj = generate(model, s, replace(scfg, mode="dual"), args.n_samples, record=True)
        _write_text(out / "r_stats.csv", analysis.r_trajectory_stats([traj]).to_csv())
    except (SamplingError, FloatingPointError, ValueError) as e:
        log.error("diagnostics failed: %s", e)
        return 3
    return _write_report(model, s, cfg, scfg, args, data, out, header)


def _write_report(model, s, cfg, scfg, args, data, out, header) -> int:
    try:
        rows = analysis.compare_paths_report(model, s, args.steps, scfg, data, args.n_samples, cfg.n_proj,
                                             args.n_traj)
    except (SamplingError, ValueError) as e:
        log.error("comparison failed: %s", e)
        return 3
    _write_text(out / "report.csv", analysis.report_to_csv(rows))
    meta = {"config_hash": header.get("config_hash"), "sampler_seed": scfg.seed, "steps": list(args.steps),
            "method": scfg.method, "sigma_rule": scfg.sigma_rule, "n_proj": cfg.n_proj,
            "heldout_seed": cfg.seed + HELDOUT_SEED_OFFSET, "config": config_echo(cfg.replace(out_dir=""))}
    _write_text(out / "report.json", analysis.report_to_json(rows, meta))
    return 0


def cmd_compare(args) -> int:
    try:
        model, cfg, header = _diagnose_model(args)
    except (OSError, TensorFileError, ConfigError) as e:
        log.error("cannot load model: %s", e)
        return 2
    s = cfg.make_schedule()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scfg = _sampler_cfg(cfg, args)
    return _write_report(model, s, cfg, scfg, args, heldout_data(cfg), out, header)


# ----------------------------------------------------------------------


def _overrides(pairs):
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise ConfigError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _sampler_flags(p):
    p.add_argument("--mode", choices=["eps_only", "x_only", "dual"])
    p.add_argument("--method", choices=["ancestral", "implicit"])
    p.add_argument("--sigma-rule", dest="sigma_rule", choices=["beta", "beta_tilde", "zero", "eta"])
    p.add_argument("--eta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--clamp", action="store_true")
    p.add_argument("--guard", action="store_true", help="clamp tiny denominators instead of failing")


def _model_flags(p):
    p.add_argument("--checkpoint", help="checkpoint file or training output directory")
    p.add_argument("--raw", action="store_true", help="use raw weights instead of the EMA")
    p.add_argument("--oracle", action="store_true", help="use the single-point oracle denoiser")
    p.add_argument("--c", default="0,0", help="oracle data point, comma separated")
    p.add_argument("--T", type=int, default=100, help="schedule length for --oracle")
    p.add_argument("--out", required=True)
    p.add_argument("--n-samples", dest="n_samples", type=int, default=1000)
    p.add_argument("--n-traj", dest="n_traj", type=int, default=64)
    p.add_argument("--steps", type=int, nargs="+", default=[5, 10, 20, 50])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dualdiff", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a dual-output denoiser")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate samples from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--raw", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, nargs="+")
    p.add_argument("--n", type=int)
    p.add_argument("--trajectories", action="store_true")
    _sampler_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("diagnose", help="per-timestep curves plus the path comparison report")
    _model_flags(p)
    _sampler_flags(p)
    p.add_argument("--sample-steps", dest="sample_steps", type=int)
    p.add_argument("--n-per-t", dest="n_per_t", type=int, default=256)
    p.add_argument("--t-stride", dest="t_stride", type=int, default=1)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("compare", help="sliced-Wasserstein report over modes and step counts")
    _model_flags(p)
    _sampler_flags(p)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "checkpoint", None) is None and not getattr(args, "oracle", True):
        log.error("either --checkpoint or --oracle is required")
        return 2
    try:
        return args.func(args)
    except ConfigError as e:
        log.error("%s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
