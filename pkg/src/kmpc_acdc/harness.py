"""Scenario orchestration: training runs, model validation, closed loop, metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import IdaPbcController, PiPrController, ideal_phase
from .config import RunConfig, load_config
from .edmd import (KoopmanModel, TrainingDataset, ValidationReport, dataset_from_lifted,
                   fit_model, generate_training_inputs, predict, validation_report,
                   write_lifted_csv)
from .gssa import lift, lift_trajectory
from .kmpc import DIAG_HEADER, KoopmanMPC, MpcConfig, build_bounds
from .params import ConfigurationError, ConverterParams, feasible_current, nominal_inputs
from .plant import Plant, PlantState, Trajectory, spwm_duty, steady_state

__all__ = ["feasible_current", "compute_power_factor", "compute_metrics", "run_training_scenario",
           "run_validation", "run_closed_loop", "RunMetrics"]


def _plant(cfg: RunConfig, p: ConverterParams, state=None, load=None) -> Plant:
    return Plant(p, cfg.mode, cfg.h_sim or None, state=state, load=load)


def _spwm(u, omega):
    u1, u2 = float(u[0]), float(u[1])
    return lambda t: u1 * math.sin(omega * t) + u2 * math.cos(omega * t)


def _concat(parts: list[Trajectory]) -> Trajectory:
    s = None if parts[0].s is None else np.concatenate([q.s for q in parts])
    return Trajectory(*(np.concatenate([getattr(q, n) for q in parts]) for n in ("t", "i", "v", "mu")), s=s)


# ---------------------------------------------------------------- identification

@dataclass
class TrainingResult:
    samples: Trajectory
    inputs: np.ndarray
    Zall: np.ndarray
    dataset: TrainingDataset


def simulate_random_input_run(cfg: RunConfig, K: int, seed: int) -> tuple[Trajectory, np.ndarray, Plant]:
    """One nominal lead-in period, then K periods of perturbed nominal input."""
    p = cfg.params()
    inputs = generate_training_inputs(nominal_inputs(p), cfg.amplitude, K, seed)
    plant = _plant(cfg, p, steady_state(p, 0.0))
    every = plant.steps_per_sample
    parts = [plant.simulate(_spwm(nominal_inputs(p), p.omega), p.period, every)]
    for u in inputs:
        parts.append(plant.simulate(_spwm(u, p.omega), p.period, every))
    return _concat(parts), inputs, plant


def run_training_scenario(cfg: RunConfig, out_dir=None) -> TrainingResult:
    p = cfg.params()
    samples, inputs, _ = simulate_random_input_run(cfg, cfg.K, cfg.seed)
    Zall = lift_trajectory(samples.i, samples.v, p.omega, p.dt_sample, p.v_min)
    ds = dataset_from_lifted(Zall, inputs)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        samples.write_csv(out / "trajectory.csv")
        write_lifted_csv(out / "dataset.csv", Zall, inputs)
        (out / "config.txt").write_text(cfg.dumps())
    return TrainingResult(samples, inputs, Zall, ds)


def train_model(cfg: RunConfig) -> KoopmanModel:
    return fit_model(run_training_scenario(cfg).dataset, cfg.ridge, cfg.affine)


@dataclass
class ValidationResult:
    samples: Trajectory
    inputs: np.ndarray
    measured: np.ndarray
    predicted: np.ndarray
    onset_times: np.ndarray
    i_onsets: np.ndarray
    report: ValidationReport
    first_window: int


def run_validation(cfg: RunConfig, model: KoopmanModel, out_dir=None) -> ValidationResult:
    """Held-out multi-step prediction check.

    The held-out run uses ``test_seed``. The first randomly driven window
    seeds the model, which then predicts ``predict_steps`` windows ahead
    under the recorded inputs.
    """
    p = cfg.params()
    if cfg.test_periods < cfg.predict_steps + 1:
        raise ConfigurationError("test_periods must exceed predict_steps")
    samples, inputs, plant = simulate_random_input_run(cfg, cfg.test_periods, cfg.test_seed)
    N = p.samples_per_period
    Zall = lift_trajectory(samples.i, samples.v, p.omega, p.dt_sample, p.v_min)
    first = 1
    steps = cfg.predict_steps
    # inputs[k] drives window k+1
    pred = predict(model, Zall[first], inputs[first:first + steps], steps)
    meas = Zall[first:first + steps + 1]
    i_all = np.append(samples.i, plant.i)
    onset_idx = np.array([(k + 1) * N for k in range(first, first + steps + 1)])
    t_on = onset_idx * p.dt_sample
    rep = validation_report(pred[1:], meas[1:], i_all[onset_idx[1:]], t_on[1:], p.omega)
    res = ValidationResult(samples, inputs, meas, pred, t_on, i_all[onset_idx], rep, first)
    if out_dir is not None:
        write_validation(res, p, Path(out_dir))
        (Path(out_dir) / "config.txt").write_text(cfg.dumps())
    return res


def write_validation(res: ValidationResult, p: ConverterParams, out: Path) -> None:
    from .gssa import phasor, reconstruct_current

    out.mkdir(parents=True, exist_ok=True)
    res.samples.write_csv(out / "test_trajectory.csv")
    with open(out / "validation.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["k", "t", "u1", "u2", "z1_meas", "z2_meas", "z3_meas", "z4_meas",
                    "z1_pred", "z2_pred", "z3_pred", "z4_pred", "i_meas", "i_hat"])
        for q, (zm, zp) in enumerate(zip(res.measured, res.predicted)):
            k = res.first_window + q
            u = res.inputs[k - 1] if k >= 1 else nominal_inputs(p)
            t = res.onset_times[q]
            w.writerow([k, repr(float(t)), *(repr(float(x)) for x in u),
                        *(repr(float(x)) for x in zm), *(repr(float(x)) for x in zp),
                        repr(float(res.i_onsets[q])),
                        repr(reconstruct_current(phasor(zp), t, p.omega))])
    _write_kv(out / "validation_metrics.csv", res.report.as_dict())


# ---------------------------------------------------------------- metrics

@dataclass
class RunMetrics:
    ss_voltage_error: float
    ss_voltage_error_end: float
    power_factor: float
    power_factor_end: float
    peak_current: float
    peak_current_post_step: float
    peak_current_after_exception: float
    restore_time_up: float
    restore_time_down: float
    violations_step_up: int
    violations_step_down: int
    constraint_violation_steps: int
    z_trace: np.ndarray = field(repr=False, default=None)
    u_trace: np.ndarray = field(repr=False, default=None)

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k not in ("z_trace", "u_trace")}


def compute_power_factor(i, v_ac) -> float:
    """Real power over apparent power for sampled AC waveforms."""
    i = np.asarray(i, float)
    v_ac = np.asarray(v_ac, float)
    irms = math.sqrt(float(np.mean(i * i)))
    vrms = math.sqrt(float(np.mean(v_ac * v_ac)))
    if irms == 0.0 or vrms == 0.0:
        raise ZeroDivisionError("power factor undefined for zero RMS waveform")
    return float(np.mean(v_ac * i)) / (irms * vrms)


def restore_time(t, v, edge: float, V_d: float, N: int, period: float, band: float = 1.0) -> float:
    """Delay after ``edge`` until the period mean of v is back within ``band``.

    The trailing one-period mean must stay inside the band for two periods,
    or until the end of the record if that comes first. Returns ``inf``
    when it never settles.
    """
    t = np.asarray(t, float)
    v = np.asarray(v, float)
    if len(v) < N:
        return math.inf
    c = np.concatenate([[0.0], np.cumsum(v)])
    mean = np.full(len(v), np.nan)
    mean[N - 1:] = (c[N:] - c[:-N]) / N
    ok = np.abs(mean - V_d) <= band
    stay = 2 * N
    for j in np.flatnonzero((t >= edge - 1e-12) & ok):
        if np.all(ok[j:j + stay + 1]):
            return max(0.0, float(t[j] - edge))
    return math.inf


def compute_metrics(samples: dict, Z: np.ndarray, U: np.ndarray, cfg: RunConfig,
                    onset_times: np.ndarray) -> RunMetrics:
    """Metrics of a closed-loop run.

    ``samples`` maps ``t, i, v, v_ac`` to per-sample arrays; row k of ``Z``
    is the window that closes at ``onset_times[k]``.
    """
    p = cfg.params()
    T, N = p.period, p.samples_per_period
    t, i, v, vac = (np.asarray(samples[k], float) for k in ("t", "i", "v", "v_ac"))
    eps = 1e-9
    pre = (t >= cfg.t_start - 2 * T - eps) & (t < cfg.t_start - eps)
    t_last = t[-1] + p.dt_sample
    end = (t >= t_last - 2 * T - eps)
    (z_lo, z_hi), _ = build_bounds(p, cfg.pf_min)

    def violations(lo_t, hi_t):
        n = 0
        for z, ton in zip(Z, onset_times):
            if ton - T < hi_t - eps and ton > lo_t + eps:
                if np.any(z[:2] < z_lo - 1e-9) or np.any(z[:2] > z_hi + 1e-9):
                    n += 1
        return n

    scen = t >= -eps
    exc_end = (math.floor(cfg.t_end / T + eps) + 1) * T
    after = t >= exc_end - eps
    return RunMetrics(
        ss_voltage_error=abs(float(np.mean(v[pre])) - p.V_d),
        ss_voltage_error_end=abs(float(np.mean(v[end])) - p.V_d),
        power_factor=compute_power_factor(i[pre], vac[pre]),
        power_factor_end=compute_power_factor(i[end], vac[end]),
        peak_current=float(np.max(np.abs(i[scen]))),
        peak_current_post_step=float(np.max(np.abs(i[t >= cfg.t_end - eps]))),
        peak_current_after_exception=float(np.max(np.abs(i[after]), initial=0.0)),
        restore_time_up=restore_time(t, v, cfg.t_start, p.V_d, N, T),
        restore_time_down=restore_time(t, v, cfg.t_end, p.V_d, N, T),
        violations_step_up=violations(cfg.t_start, cfg.t_end),
        violations_step_down=violations(cfg.t_end, t_last),
        constraint_violation_steps=violations(0.0, t_last),
        z_trace=Z, u_trace=U,
    )


# ---------------------------------------------------------------- closed loop

@dataclass
class ClosedLoopResult:
    samples: dict
    Z: np.ndarray
    U: np.ndarray
    onset_times: np.ndarray
    diagnostics: list
    metrics: RunMetrics
    cfg: RunConfig


WAVE_HEADER = ["t", "i", "v", "v_ac", "mu", "P"]


def load_profile(cfg: RunConfig):
    lo, hi, P0, P1 = cfg.t_start, cfg.t_end, cfg.P, cfg.P_high
    return lambda t: P1 if lo <= t < hi else P0


def run_closed_loop(cfg: RunConfig, model: Optional[KoopmanModel] = None, out_dir=None,
                    noise_seed: Optional[int] = None) -> ClosedLoopResult:
    """Run one controller against the plant through the CPL step.

    The plant starts on the analytic operating point at ``-warmup`` (a whole
    number of AC periods) so the controller settles before t = 0.
    """
    p = cfg.params()
    pc = cfg.controller_params()
    T, N, dt = p.period, p.samples_per_period, p.dt_sample
    n_warm = int(round(cfg.warmup / T))
    if abs(n_warm * T - cfg.warmup) > 1e-9:
        raise ConfigurationError("warmup must be a whole number of AC periods")
    t0 = -n_warm * T
    n_samples = int(round((cfg.duration - t0) / dt))
    load = load_profile(cfg)
    plant = _plant(cfg, p, steady_state(p, t0), load)
    rng = np.random.default_rng(cfg.seed if noise_seed is None else noise_seed)

    ubar = np.array(nominal_inputs(pc))
    ctrl = cfg.controller
    if ctrl == "kmpc":
        if model is None:
            raise ConfigurationError("kmpc needs a fitted model")
        mcfg = MpcConfig.for_converter(pc, cfg.pf_min, horizon=cfg.horizon,
                                       slack_weight=cfg.slack_weight)
        (mcfg.u_lo, mcfg.u_hi) = build_bounds(pc, cfg.pf_min, input_band=cfg.input_band)[1]
        mpc = KoopmanMPC(model, mcfg, ubar)
    elif ctrl == "ida_pbc":
        ida = IdaPbcController(pc)
    else:
        pipr = PiPrController(pc)

    cols = {k: np.empty(n_samples) for k in WAVE_HEADER}
    u = ubar.copy()
    Z, U, onsets, diags = [], [], [], []
    for j in range(n_samples):
        t = plant.t
        i_m, v_m = plant.i, plant.v
        if cfg.noise_std > 0.0:
            i_m += cfg.noise_std * rng.standard_normal()
            v_m += cfg.noise_std * rng.standard_normal()
        cols["t"][j], cols["i"][j], cols["v"][j] = t, i_m, v_m
        P_now = load(t)
        cols["P"][j] = P_now
        cols["v_ac"][j] = p.E * math.sin(p.omega * t)
        onset = j >= N and j % N == 0
        diag = None
        if onset:
            z = lift(cols["i"][j - N:j], cols["v"][j - N:j], p.omega, dt, j - N, 0.0)
            diag = {"z": z}
            if ctrl == "kmpc":
                u, d = mpc.step(z)
                diag.update(d)
        if ctrl == "kmpc":
            duty = _spwm(u, p.omega)
        elif ctrl == "ida_pbc":
            u = np.array(ida.step(pc.G * v_m + P_now / max(v_m, pc.v_min)))
            duty = _spwm(u, p.omega)
        else:
            mu = pipr.step(v_m, i_m, ideal_phase(t, p.omega))
            duty = (lambda m: (lambda _t: m))(mu)
            u = np.full(2, np.nan)
        if diag is not None:
            diag["k"] = j // N
            diag["u"] = u.copy()
            if ctrl == "pi_pr":
                diag["I_g"] = pipr.state.I_g
                diag["integ_v"] = pipr.state.integ_v
            Z.append(diag["z"])
            U.append(u.copy())
            onsets.append(t)
            diags.append(diag)
        cols["mu"][j] = max(-1.0, min(1.0, duty(t)))
        plant.advance(duty, plant.steps_per_sample)

    Z = np.array(Z).reshape(-1, 4)
    U = np.array(U).reshape(-1, 2)
    onsets = np.array(onsets)
    metrics = compute_metrics(cols, Z, U, cfg, onsets)
    res = ClosedLoopResult(cols, Z, U, onsets, diags, metrics, cfg)
    if out_dir is not None:
        write_closed_loop(res, Path(out_dir))
    return res


def write_closed_loop(res: ClosedLoopResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    cols = res.samples
    with open(out / "waveforms.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(WAVE_HEADER)
        for row in zip(*(cols[k] for k in WAVE_HEADER)):
            w.writerow([repr(float(x)) for x in row])
    extra = {"kmpc": [], "ida_pbc": [], "pi_pr": ["I_g", "integ_v"]}[res.cfg.controller]
    with open(out / "lifted.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(DIAG_HEADER + extra)
        for d, z, u in zip(res.diagnostics, res.Z, res.U):
            row = [d["k"], *(repr(float(x)) for x in z), *(repr(float(x)) for x in u)]
            if "cost" in d:
                row += [repr(float(d["cost"])), repr(float(d["slack_max"])), d["solver_iters"], d["status"]]
            else:
                row += ["", "", "", ""]
            row += [repr(float(d.get(name, float("nan")))) for name in extra]
            w.writerow(row)
    _write_kv(out / "metrics.csv", res.metrics.as_dict())
    (out / "config.txt").write_text(res.cfg.dumps())


def metrics_from_run_dir(run_dir) -> RunMetrics:
    """Recompute metrics from the CSV files a closed-loop run emitted."""
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.txt")
    with open(run_dir / "waveforms.csv", newline="") as f:
        rows = list(csv.reader(f))
    if rows[0] != WAVE_HEADER:
        raise ConfigurationError(f"{run_dir}/waveforms.csv has an unexpected header")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(WAVE_HEADER))
    samples = {k: data[:, n] for n, k in enumerate(WAVE_HEADER)}
    with open(run_dir / "lifted.csv", newline="") as f:
        rows = list(csv.reader(f))
    body = rows[1:]
    Z = np.array([[float(x) for x in r[1:5]] for r in body]).reshape(-1, 4)
    U = np.array([[float(x) for x in r[5:7]] for r in body]).reshape(-1, 2)
    p = cfg.params()
    t0 = samples["t"][0]
    onsets = np.array([t0 + int(r[0]) * p.period for r in body])
    # onset times are re-derived from the sample clock
    idx = np.array([int(r[0]) * p.samples_per_period for r in body], dtype=int)
    if len(idx):
        onsets = samples["t"][idx]
    return compute_metrics(samples, Z, U, cfg, onsets)


def _write_kv(path, d: dict) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for k, v in d.items():
            w.writerow([k, repr(float(v)) if isinstance(v, float) else v])


def read_kv(path) -> dict:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))[1:]
    out = {}
    for k, v in rows:
        out[k] = int(v) if v.lstrip("-").isdigit() else float(v)
    return out


# ---------------------------------------------------------------- sweeps

def expand_grid(base: RunConfig, grid: dict) -> list[tuple[str, RunConfig]]:
    """Cartesian product of ``grid`` values applied to ``base``."""
    import itertools

    keys = list(grid)
    out = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        changes = dict(zip(keys, combo))
        name = "_".join(f"{k}-{v}" for k, v in changes.items()) or "base"
        out.append((name, base.updated(**changes)))
    return out


def _sweep_one(args):
    name, cfg, model_path, out_dir = args
    model = KoopmanModel.load(model_path) if cfg.controller == "kmpc" else None
    res = run_closed_loop(cfg, model, Path(out_dir) / name)
    return name, res.metrics.as_dict()


def sweep(base: RunConfig, grid: dict, out_dir, model_path=None, jobs: int = 1) -> list[tuple[str, dict]]:
    """Independent closed-loop runs, optionally in worker processes."""
    from concurrent.futures import ProcessPoolExecutor

    runs = expand_grid(base, grid)
    if any(c.controller == "kmpc" for _, c in runs) and model_path is None:
        raise ConfigurationError("kmpc runs in the sweep need a model file")
    tasks = [(n, c, model_path, out_dir) for n, c in runs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = list(results[0][1]) if results else []
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run"] + keys)
        for name, m in results:
            w.writerow([name] + [repr(m[k]) if isinstance(m[k], float) else m[k] for k in keys])
    return results
