"""Train the gauss8 toy model for one or more seeds and print the SWD table.

    python scripts/toy_benchmark.py --seeds 0 1 --out runs/bench

Rows are sampler modes, columns step counts; lower is better.
"""
import argparse
import json
import time
from pathlib import Path

from dualdiff.analysis import compare_paths_report, report_to_csv
from dualdiff.cli import heldout_data
from dualdiff.config import config_hash, load_config
from dualdiff.data import dataset_sample
from dualdiff.denoiser import Denoiser, init_params
from dualdiff.tensorio import write_checkpoint
from dualdiff.training import train

MODES = ("dual", "fixed_r", "eps_only", "x_only")


def run(cfg, steps_list, raw):
    s = cfg.make_schedule()
    data = dataset_sample(cfg.dataset, cfg.n_train, cfg.seed, cfg.point_c)
    params = init_params(cfg.D, cfg.hidden, cfg.emb, cfg.seed, cfg.T, cfg.r_mode)
    t0 = time.perf_counter()
    res = train(params, data, s, cfg.steps, cfg.batch, cfg.lr, cfg.ema_decay, cfg.ema_warmup, cfg.seed,
                cfg.lambdas, log_every=cfg.log_every)
    secs = time.perf_counter() - t0
    model = Denoiser(res.params if raw else res.ema)
    rows = compare_paths_report(model, s, steps_list, cfg.sampler_config(), heldout_data(cfg),
                                cfg.n_samples, cfg.n_proj)
    return res, rows, secs


def table(rows, steps_list):
    by = {(r["steps"], r["mode"]): r["swd"] for r in rows}
    lines = ["mode      " + "".join(f"{'K=' + str(K):>10}" for K in steps_list)]
    for m in MODES:
        lines.append(f"{m:<10}" + "".join(f"{by[(K, m)]:>10.4f}" for K in steps_list))
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=str(Path(__file__).parent.parent / "configs" / "gauss8.cfg"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--steps", type=int, nargs="+", default=[5, 10, 20, 50])
    ap.add_argument("--train-steps", type=int, help="override the number of training steps")
    ap.add_argument("--raw", action="store_true", help="evaluate raw weights instead of the EMA")
    ap.add_argument("--out", default="runs/bench")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in args.seeds:
        over = {"seed": str(seed)}
        if args.train_steps is not None:
            over["steps"] = str(args.train_steps)
        cfg = load_config(args.config, **over)
        res, rows, secs = run(cfg, args.steps, args.raw)
        print(f"\nseed {seed}: trained {cfg.steps} steps in {secs:.0f} s")
        print(table(rows, args.steps))
        write_checkpoint(out / f"seed{seed}_ema.ckpt", res.ema, seed, config_hash(cfg), res.steps)
        (out / f"seed{seed}_report.csv").write_text(report_to_csv(rows))
        (out / f"seed{seed}_report.json").write_text(json.dumps(rows, indent=2))


if __name__ == "__main__":
    main()
