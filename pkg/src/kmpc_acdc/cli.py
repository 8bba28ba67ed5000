"""Command-line entry point."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, _parse, load_config, parse_assignments
from .params import ConfigurationError, InfeasibleOperatingPoint


def _common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", type=Path, help="key = value configuration file")
    sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override one configuration key (repeatable)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mode", choices=["switched", "averaged"])
    sp.add_argument("--plots", action="store_true", help="also write SVG figures")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kmpc-acdc", description="Koopman MPC experiments on a boost rectifier")
    sub = ap.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("train", help="simulate the random-input training run and lift it")
    _common(sp)
    sp.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("fit", help="fit a lifted linear model from a training directory")
    _common(sp)
    sp.add_argument("data", type=Path, help="directory written by train")
    sp.add_argument("--out", type=Path, required=True, help="model file")

    sp = sub.add_parser("validate", help="multi-step prediction check on a held-out run")
    _common(sp)
    sp.add_argument("--model", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("run", help="closed-loop load-step experiment")
    _common(sp)
    sp.add_argument("--controller", choices=["kmpc", "ida_pbc", "pi_pr"])
    sp.add_argument("--model", type=Path)
    sp.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("metrics", help="recompute metrics from a run directory")
    sp.add_argument("run_dir", type=Path)

    sp = sub.add_parser("sweep", help="grid of closed-loop runs")
    _common(sp)
    sp.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                    help="values for one key (repeatable)")
    sp.add_argument("--model", type=Path)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", type=Path, required=True)
    return ap


def _config(args):
    over = parse_assignments(args.overrides)
    for key in ("seed", "mode", "controller"):
        val = getattr(args, key, None)
        if val is not None:
            # a held-out run draws its inputs from test_seed
            over["test_seed" if key == "seed" and args.cmd == "validate" else key] = val
    if getattr(args, "plots", False):
        over["plots"] = True
    return load_config(args.config, over)


def _print_kv(d: dict) -> None:
    for k, v in d.items():
        print(f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}")


def _dispatch(args) -> int:
    from . import harness
    from .edmd import KoopmanModel, dataset_from_lifted, fit_model, read_lifted_csv

    if args.cmd == "metrics":
        _print_kv(harness.metrics_from_run_dir(args.run_dir).as_dict())
        return 0

    cfg = _config(args)
    if args.cmd == "train":
        res = harness.run_training_scenario(cfg, args.out)
        print(f"{len(res.samples)} samples, {len(res.Zall)} windows -> {args.out}")
    elif args.cmd == "fit":
        Z, U = read_lifted_csv(args.data / "dataset.csv")
        model = fit_model(dataset_from_lifted(Z, U), cfg.ridge, cfg.affine)
        model.save(args.out)
        print(f"spectral radius {model.spectral_radius():.4f}"
              + (" (ridge changed the fit by more than 1%)" if model.ridge_flag else ""))
    elif args.cmd == "validate":
        res = harness.run_validation(cfg, KoopmanModel.load(args.model), args.out)
        _print_kv(res.report.as_dict())
        if cfg.plots:
            from .report import plot_validation
            plot_validation(res, cfg.params(), args.out)
    elif args.cmd == "run":
        model = None
        if cfg.controller == "kmpc":
            if args.model is None:
                raise ConfigError("run --controller kmpc needs --model")
            model = KoopmanModel.load(args.model)
        res = harness.run_closed_loop(cfg, model, args.out)
        _print_kv(res.metrics.as_dict())
        if cfg.plots:
            from .report import plot_lifted, plot_waveforms
            plot_waveforms(res, args.out)
            plot_lifted(res, args.out)
    elif args.cmd == "sweep":
        grid = {}
        for item in args.grid:
            if "=" not in item:
                raise ConfigError(f"expected KEY=V1,V2 in --grid, got {item!r}")
            k, vals = item.split("=", 1)
            grid[k.strip()] = [_parse(k.strip(), v) for v in vals.split(",")]
        for name, m in harness.sweep(cfg, grid, args.out, args.model, args.jobs):
            print(f"{name}: ss_err={m['ss_voltage_error']:.3g} V pf={m['power_factor']:.3f} "
                  f"peak={m['peak_current']:.3g} A")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except (ConfigError, ConfigurationError, InfeasibleOperatingPoint) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
