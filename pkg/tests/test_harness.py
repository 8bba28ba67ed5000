import math

import numpy as np
import pytest

from kmpc_acdc.config import RunConfig
from kmpc_acdc.gssa import lift_trajectory
from kmpc_acdc.harness import (compute_metrics, compute_power_factor, metrics_from_run_dir,
                               read_kv, restore_time, run_closed_loop, run_training_scenario,
                               run_validation, sweep)
from kmpc_acdc.params import ConfigurationError, feasible_current

W = 2 * math.pi * 50
T = 0.02


def test_feasible_current_reexported(p):
    assert feasible_current(p) == pytest.approx(2.44, abs=0.01)


def _wave(n_periods=2, phase=0.0):
    t = 200e-6 * np.arange(100 * n_periods)
    return t, 39.6 * np.sin(W * t), np.sin(W * t - phase)


def test_power_factor_examples():
    t, vac, _ = _wave()
    assert compute_power_factor(3.0 * vac, vac) == pytest.approx(1.0, abs=1e-9)
    assert compute_power_factor(np.cos(W * t), vac) == pytest.approx(0.0, abs=1e-9)
    _, vac, i = _wave(phase=math.acos(0.9))
    assert compute_power_factor(i, vac) == pytest.approx(0.9, abs=1e-6)
    with pytest.raises(ZeroDivisionError):
        compute_power_factor(np.zeros_like(vac), vac)


def test_power_factor_in_unit_interval(rng):
    for _ in range(50):
        t, vac, _ = _wave()
        i = rng.normal(size=t.size)
        assert 0.0 <= abs(compute_power_factor(i, vac)) <= 1.0


def test_metrics_on_ideal_trajectory(p):
    cfg = RunConfig(duration=0.12, warmup=0.0)
    t = p.dt_sample * np.arange(600)
    i = p.I_d * np.sin(p.omega * t)
    v = np.full_like(t, p.V_d)
    Z = lift_trajectory(i, v, p.omega, p.dt_sample)
    onsets = (np.arange(len(Z)) + 1) * p.period
    m = compute_metrics({"t": t, "i": i, "v": v, "v_ac": p.E * np.sin(p.omega * t)},
                        Z, np.zeros((len(Z), 2)), cfg, onsets)
    assert m.ss_voltage_error == 0.0 and m.ss_voltage_error_end == 0.0
    assert m.restore_time_up == 0.0 and m.restore_time_down == 0.0
    assert m.power_factor == pytest.approx(1.0, abs=1e-12)
    assert m.constraint_violation_steps == 0
    assert m.peak_current == pytest.approx(p.I_d, rel=1e-3)


def test_restore_time_never_settles():
    t = 200e-6 * np.arange(600)
    assert restore_time(t, np.full(600, 40.0), 0.03, 48.0, 100, T) == math.inf


def test_restore_time_step_back():
    t = 200e-6 * np.arange(1000)
    v = np.where(t < 0.05, 44.0, 48.0)
    # the trailing mean re-enters the band at sample 324, when 25 low samples remain
    assert restore_time(t, v, 0.04, 48.0, 100, T) == pytest.approx(324 * 200e-6 - 0.04, abs=1e-12)


def test_training_run_shape_and_determinism(tmp_path):
    cfg = RunConfig(K=400)
    r = run_training_scenario(cfg, tmp_path / "a")
    assert len(r.samples) == 40100          # lead-in period plus 400 perturbed periods
    assert r.Zall.shape == (401, 4)
    assert r.dataset.K == 400
    run_training_scenario(cfg, tmp_path / "b")
    for name in ("trajectory.csv", "dataset.csv", "config.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_training_inputs_respect_amplitude():
    r = run_training_scenario(RunConfig(K=20, amplitude=0.05))
    from kmpc_acdc.params import nominal_inputs
    assert np.all(np.abs(r.inputs - nominal_inputs(RunConfig().params())) <= 0.05)


def test_validation_run_outputs(tmp_path, model):
    res = run_validation(RunConfig(), model, tmp_path)
    assert res.predicted.shape == (4, 4) and res.measured.shape == (4, 4)
    assert np.array_equal(res.predicted[0], res.measured[0])
    lines = (tmp_path / "validation.csv").read_text().splitlines()
    assert lines[0].startswith("k,t,u1,u2,z1_meas") and len(lines) == 5
    with pytest.raises(ConfigurationError):
        run_validation(RunConfig(test_periods=3), model)


def test_metrics_roundtrip_through_csv(tmp_path, model):
    cfg = RunConfig(controller="kmpc")
    res = run_closed_loop(cfg, model, tmp_path)
    again = metrics_from_run_dir(tmp_path)
    assert again.as_dict() == res.metrics.as_dict()
    assert read_kv(tmp_path / "metrics.csv") == res.metrics.as_dict()


def test_controllers_share_plant_until_first_difference(model):
    runs = {c: run_closed_loop(RunConfig(controller=c, mode="switched", duration=0.06,
                                         t_start=0.034, t_end=0.054, warmup=0.02),
                               model if c == "kmpc" else None)
            for c in ("kmpc", "ida_pbc", "pi_pr")}
    ref = runs["kmpc"].samples
    for c in ("ida_pbc", "pi_pr"):
        s = runs[c].samples
        diff = np.flatnonzero(s["mu"] != ref["mu"])
        k = diff[0] if diff.size else len(s["mu"])
        for col in ("t", "i", "v", "v_ac", "P"):
            assert np.array_equal(s[col][:k + 1], ref[col][:k + 1])


def test_kmpc_requires_model():
    with pytest.raises(ConfigurationError):
        run_closed_loop(RunConfig(controller="kmpc"))


def test_warmup_must_be_whole_periods():
    with pytest.raises(ConfigurationError):
        run_closed_loop(RunConfig(controller="pi_pr", warmup=0.015))


def test_ida_pbc_mismatch_gives_voltage_error(closed_loop_runs):
    assert closed_loop_runs["ida_pbc", 0.5].metrics.ss_voltage_error > 0.0


def test_pi_pr_restores_faster_than_kmpc(closed_loop_runs):
    pi, km = closed_loop_runs["pi_pr", 0.0].metrics, closed_loop_runs["kmpc", 0.0].metrics
    assert pi.restore_time_up < km.restore_time_up
    assert pi.restore_time_down < km.restore_time_down


@pytest.mark.xfail(strict=True, reason="the first post-step period is open loop for K-MPC, which "
                   "holds its input for a whole AC period while the CPL edge acts")
def test_pi_pr_post_step_peak_exceeds_kmpc(closed_loop_runs):
    pi, km = closed_loop_runs["pi_pr", 0.0].metrics, closed_loop_runs["kmpc", 0.0].metrics
    assert pi.peak_current_post_step > km.peak_current_post_step


def test_kmpc_steady_input_near_nominal(closed_loop_runs, p):
    from kmpc_acdc.params import nominal_inputs
    r = closed_loop_runs["kmpc", 0.0]
    pre = (r.onset_times < 0.034) & (r.onset_times >= 0.0)
    assert np.all(np.abs(r.U[pre] - np.array(nominal_inputs(p))) <= 0.02)


def test_sweep_parallel_matches_serial(tmp_path):
    base = RunConfig(mode="averaged")
    grid = {"controller": ["ida_pbc", "pi_pr"]}
    par = sweep(base, grid, tmp_path / "par", jobs=2)
    ser = sweep(base, grid, tmp_path / "ser", jobs=1)
    assert par == ser
    assert (tmp_path / "par" / "summary.csv").read_bytes() == (tmp_path / "ser" / "summary.csv").read_bytes()
    with pytest.raises(ConfigurationError):
        sweep(base, {"controller": ["kmpc"]}, tmp_path / "x")
