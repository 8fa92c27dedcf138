import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from dualdiff.analysis import (CurveSet, compare_paths_report, per_timestep_losses, predicted_x0_stats,
                               r_trajectory_stats, random_directions, report_to_csv, report_to_json,
                               sliced_wasserstein, wasserstein_1d)
from dualdiff.denoiser import Denoiser, init_params, oracle_denoiser
from dualdiff.rng import Rng
from dualdiff.sampler import SamplerConfig, Trajectory
from dualdiff.schedule import make_linear

S = make_linear(100, 1e-3, 0.2)
C = np.array([0.3, -0.7])


def test_curveset_validates_and_writes_csv():
    with pytest.raises(ValueError):
        CurveSet([1, 2], {"a": [0.1]})
    cs = CurveSet([1, 2], {"a": [0.5, 0.25]})
    assert cs.to_csv() == "t,a\n1,0.5\n2,0.25\n"


def test_oracle_losses_zero():
    cs = per_timestep_losses(oracle_denoiser(C, S), np.tile(C, (10, 1)), S, n_per_t=8)
    assert len(cs.t_values) == 100
    for name in ("mu_loss_eps", "mu_loss_x", "x0_loss_x", "eps_loss_x", "x0_loss_eps", "eps_loss_eps"):
        assert np.max(cs[name]) < 1e-20, name


def test_loss_estimates_stable_in_n():
    model = Denoiser(init_params(2, 16, 8, seed=1, T=100))
    data = Rng(0).normal((500, 2))
    a = per_timestep_losses(model, data, S, 256, [10, 50, 90], seed=1)
    b = per_timestep_losses(model, data, S, 512, [10, 50, 90], seed=2)
    se = np.hypot(a["eps_loss_eps_se"], b["eps_loss_eps_se"])
    assert np.all(np.abs(a["eps_loss_eps"] - b["eps_loss_eps"]) < 3 * se)


def test_oracle_pred_x0_stats():
    cs = predicted_x0_stats(oracle_denoiser(C, S), S, 50, SamplerConfig(steps=10))
    np.testing.assert_allclose(cs["pred_x0_mean_x"], C.mean())
    np.testing.assert_allclose(cs["pred_x0_var_x"], C.var(), atol=1e-15)


def _traj(rs):
    tr = Trajectory()
    tr.r_values = [np.asarray(r, float).reshape(-1, 1) for r in rs]
    tr.timesteps = list(range(len(rs), 0, -1))
    return tr


def test_r_stats():
    cs = r_trajectory_stats([_traj([[0.5, 0.5]] * 3)])
    for k in ("r_mean", "r_min", "r_max"):
        np.testing.assert_array_equal(cs[k], 0.5)
    rng = Rng(1)
    cs = r_trajectory_stats([_traj(rng.uniform((4, 6))), _traj(rng.uniform((4, 2)))])
    assert np.all(cs["r_min"] <= cs["r_mean"]) and np.all(cs["r_mean"] <= cs["r_max"])
    assert cs.meta["n_trajectories"] == 8
    with pytest.raises(ValueError):
        r_trajectory_stats([_traj([[0.5]])], min_count=64)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**31 - 1))
def test_w1_matches_scipy(n, m, seed):
    rng = Rng(seed)
    a, b = rng.normal(n), rng.normal(m) + 0.3
    assert wasserstein_1d(a, b) == pytest.approx(scipy.stats.wasserstein_distance(a, b), rel=1e-9, abs=1e-12)


def test_swd_basic_properties():
    rng = Rng(2)
    A, B = rng.normal((300, 2)), rng.normal((200, 2))
    assert sliced_wasserstein(A, A) == 0
    assert sliced_wasserstein(A, B, seed=3) == pytest.approx(sliced_wasserstein(B, A, seed=3), rel=1e-12)
    perm = rng.permutation(300)
    assert sliced_wasserstein(A[perm], B) == pytest.approx(sliced_wasserstein(A, B), rel=1e-12)
    with pytest.raises(ValueError):
        sliced_wasserstein(A, B, n_proj=8)
    with pytest.raises(ValueError):
        sliced_wasserstein(A, np.zeros((5, 3)))


def test_swd_shift_closed_form():
    """Pure translation by v projects to a shift of |<v, u>|; E|cos| = 2/pi in 2-D."""
    A = Rng(3).normal((2000, 2))
    v = np.array([0.6, 0.8])
    swd = sliced_wasserstein(A, A + v, n_proj=4096, seed=0)
    assert swd == pytest.approx(2 / np.pi, rel=0.02)
    u = random_directions(4096, 2, 0)
    assert swd == pytest.approx(np.mean(np.abs(u @ v)), rel=1e-9)


def test_report_rows_and_formats():
    model = Denoiser(init_params(2, 16, 8, seed=1, T=100))
    held = Rng(4).normal((200, 2))
    rows = compare_paths_report(model, S, [2, 4], SamplerConfig(), held, n_samples=100, n_proj=32, n_traj=16)
    assert [(r["steps"], r["mode"]) for r in rows] == [
        (K, m) for K in (2, 4) for m in ("dual", "fixed_r", "eps_only", "x_only")]
    again = compare_paths_report(model, S, [2, 4], SamplerConfig(), held, n_samples=100, n_proj=32, n_traj=16)
    assert rows == again
    assert report_to_csv(rows).count("\n") == 9
    assert '"rows"' in report_to_json(rows, {"a": 1})
