import time

import pytest

from dualdiff.cli import heldout_data
from dualdiff.config import ExperimentConfig
from dualdiff.data import dataset_sample
from dualdiff.denoiser import Denoiser, init_params
from dualdiff.training import train

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record(criterion: str, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy():
    """The gauss8 benchmark model: D=2, H=128, T=100, 10k steps, batch 128, lr 2e-4, EMA 0.9999."""
    cfg = ExperimentConfig()
    s = cfg.make_schedule()
    data = dataset_sample(cfg.dataset, cfg.n_train, cfg.seed)
    params = init_params(cfg.D, cfg.hidden, cfg.emb, cfg.seed, cfg.T, cfg.r_mode)
    t0 = time.perf_counter()
    res = train(params, data, s, cfg.steps, cfg.batch, cfg.lr, cfg.ema_decay, cfg.ema_warmup, cfg.seed,
                log_every=cfg.log_every)
    seconds = time.perf_counter() - t0
    return {"cfg": cfg, "s": s, "data": data, "result": res, "seconds": seconds,
            "model": Denoiser(res.ema), "raw": Denoiser(res.params), "heldout": heldout_data(cfg)}
