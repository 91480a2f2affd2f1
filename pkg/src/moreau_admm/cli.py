"""Command-line entry points.

Subcommands: ``run`` (trace both methods on seeded trials), ``grid``
(step-decay grid search for the baseline), ``sweep`` (dimension sweep for
both methods), ``check`` (evaluate the convergence conditions).  Exit
codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import diagnostics, experiments, plots

__all__ = ["main", "console_main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moreau-admm",
        description="Decentralized consensus experiments: Moreau-envelope ADMM vs. projected subgradient.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("run", "run seeded trials and write per-trial trace CSVs"),
        ("grid", "average the baseline's final MSE over a step-decay grid"),
        ("sweep", "average both methods' final MSE over a dimension sweep"),
        ("check", "evaluate the convergence conditions for the configuration"),
    ):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", type=str, default=None, help="JSON config path (defaults used if omitted)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", type=str, default=None, help="override the output directory")
        p.add_argument(
            "--method",
            choices=("madm", "dpsm", "both"),
            default="both",
            help="which solver(s) to run (run command only)",
        )
        p.add_argument("--jobs", type=int, default=1, help="concurrent trial processes")
        p.add_argument(
            "--timing",
            action="store_true",
            help="write measured per-iteration wall times into trace CSVs "
            "(breaks byte-identical reruns)",
        )
    return parser


def _load(args) -> experiments.ExperimentConfig:
    if args.config is None:
        cfg = experiments.ExperimentConfig()
    else:
        cfg = experiments.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.jobs < 1:
        raise experiments.ConfigError("--jobs must be at least 1")
    return cfg


def _methods(args) -> tuple:
    return ("madm", "dpsm") if args.method == "both" else (args.method,)


def _out_dir(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_run(args) -> int:
    cfg = _load(args)
    methods = _methods(args)
    out = _out_dir(cfg)
    results = experiments.run_experiment(cfg, methods=methods, jobs=args.jobs)
    for r in results:
        if r.error is not None:
            continue
        for method in methods:
            run_result = getattr(r, method)
            diagnostics.write_trace_csv(
                run_result.trace, out / f"trace_{method}_{r.trial_index}.csv", include_wall_time=args.timing
            )
    gate = next((r.madm.gate for r in results if r.error is None and r.madm is not None), None)
    if gate is not None:
        (out / "gate.txt").write_text(gate.summary() + "\n", encoding="ascii")
    curves = {m: experiments.averaged_mse_curve(results, m) for m in methods}
    plots.plot_mse_vs_iteration(curves, out / "fig_mse_vs_iteration.png")
    for method in methods:
        avg = experiments.average_final_mse(results, method)
        print(f"{method}: averaged final MSE over {cfg.num_trials} trials = {avg:.6g}")
    print(f"outputs written to {out}")
    return 0


def _cmd_grid(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    rows = experiments.gamma_grid_search(cfg, jobs=args.jobs)
    experiments.write_grid_csv(rows, out / "summary_grid.csv")
    plots.plot_mse_vs_gamma(rows, out / "fig_mse_vs_gamma.png")
    for gv, err in rows:
        print(f"gamma={gv:g}: averaged final MSE = {err:.6g}")
    print(f"outputs written to {out}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    rows = experiments.dimension_sweep(cfg, jobs=args.jobs)
    experiments.write_sweep_csv(rows, out / "summary_sweep.csv")
    plots.plot_mse_vs_dimension(rows, out / "fig_mse_vs_dimension.png")
    for dim, method, err in rows:
        print(f"N={dim} {method}: averaged final MSE = {err:.6g}")
    print(f"outputs written to {out}")
    return 0


def _cmd_check(args) -> int:
    cfg = _load(args)
    gate = experiments.check_config(cfg)
    print(gate.summary())
    if args.out is not None:
        out = _out_dir(cfg)
        (out / "gate.txt").write_text(gate.summary() + "\n", encoding="ascii")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "grid": _cmd_grid, "sweep": _cmd_sweep, "check": _cmd_check}
    try:
        return handlers[args.command](args)
    except experiments.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())
