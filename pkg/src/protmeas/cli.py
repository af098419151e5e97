"""Command-line interface.

Subcommands:

* run      -- one measurement from a config file
* sweep    -- log-spaced interaction-time sweep (config or built-in
              tilted-qubit benchmark)
* coldatom -- the cold-atom proposal, analytic or full-grid
* fit      -- power-law fit of a previously emitted sweep CSV

Exit codes: 0 success, 2 config error, 3 convergence error, 4 I/O error.
Worker count for sweeps comes from --workers or PROTMEAS_WORKERS.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from .analysis import (
    VALIDITY_THRESHOLD,
    fit_power_law,
    sweep_over_T,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    OutputError,
    ProtmeasError,
)
from .measurement import (
    MeasurementConfig,
    run_generalized,
    run_protective,
    strong_run_result,
)
from .reporting import emit_results, parse_config
from .scenarios import ColdAtomParams, cold_atom_run, qubit_benchmark_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4


def _worker_count(args) -> int:
    if getattr(args, "workers", None):
        return max(1, int(args.workers))
    env = os.environ.get("PROTMEAS_WORKERS")
    return max(1, int(env)) if env else 1


def _run_one(config: MeasurementConfig):
    if config.mode == "strong":
        return strong_run_result(config)
    if config.mode == "generalized":
        return run_generalized(config)
    return run_protective(config)


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    if not isinstance(config, MeasurementConfig):
        raise ConfigError("'run' needs a measurement config", field="kind")
    if args.mode:
        config = replace(config, mode=args.mode)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    result = _run_one(config)
    paths, _ = emit_results(result, args.format, args.out, basename="run",
                            config=config, seed=config.seed)
    print(f"wrote {paths[0]}")
    if args.plot:
        from .plotting import pointer_figure

        fig_path = os.path.join(args.out, "run_pointer.png")
        pointer_figure(result, config, fig_path)
        print(f"wrote {fig_path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    if args.config:
        base = parse_config(args.config)
        if not isinstance(base, MeasurementConfig):
            raise ConfigError("'sweep' needs a measurement config", field="kind")
    else:
        base = qubit_benchmark_config(args.theta)
    if args.seed is not None:
        base = replace(base, seed=args.seed)
    t_values = np.geomspace(args.t_min, args.t_max, args.points)
    sweep = sweep_over_T(base, t_values, workers=_worker_count(args))
    paths, _ = emit_results(sweep, args.format, args.out, basename="sweep",
                            config=base, seed=base.seed)
    print(f"wrote {paths[0]}")
    if sweep.fit is not None:
        print(
            f"fit: slope={sweep.fit.slope:.6g} intercept={sweep.fit.intercept:.6g} "
            f"r_squared={sweep.fit.r_squared:.6g} window={list(sweep.fit.window)}"
        )
    failed = [e for e in sweep.point_errors if e]
    for err in failed:
        print(f"point error: {err}", file=sys.stderr)
    if args.plot:
        from .plotting import sweep_figure

        fig_path = os.path.join(args.out, "sweep.png")
        sweep_figure(sweep, fig_path)
        print(f"wrote {fig_path}")
    return EXIT_OK


def _cmd_coldatom(args) -> int:
    params = parse_config(args.params) if args.params else ColdAtomParams()
    if not isinstance(params, ColdAtomParams):
        raise ConfigError("'coldatom' needs a coldatom config", field="kind")
    level = "full-grid" if args.level == "full" else "analytic"
    outcome = cold_atom_run(params, fidelity_level=level)
    paths, _ = emit_results(outcome.result, args.format, args.out,
                            basename="coldatom", config=params, seed=0)
    s = outcome.summary
    print(f"wrote {paths[0]}")
    print(f"momentum shift    {s.momentum_shift:.9e} kg m/s")
    print(f"momentum spread   {s.momentum_spread:.9e} kg m/s")
    print(f"shift / spread    {s.shift_to_spread:.6g}")
    print(f"final width (RMS) {s.final_position_width:.9e} m")
    print(f"drift displacement {s.drift_displacement:.9e} m over {params.drift_time} s")
    if not s.visibility_ok:
        print("warning: momentum shift below momentum spread", file=sys.stderr)
    if args.plot:
        from .plotting import coldatom_figure

        fig_path = os.path.join(args.out, "coldatom.png")
        coldatom_figure(outcome, params, fig_path)
        print(f"wrote {fig_path}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    try:
        with open(args.infile, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise OutputError(f"cannot read CSV: {exc}", path=args.infile) from exc
    if not rows:
        raise ConfigError("CSV has no data rows", field=None)
    try:
        t = np.array([float(r["T"]) for r in rows])
        dist = np.array([float(r["disturbance"]) for r in rows])
        validity = np.array([float(r["validity"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"CSV missing sweep columns: {exc}", field=None) from exc
    mask = np.isfinite(dist) & (dist > 0.0) & (validity < VALIDITY_THRESHOLD)
    idx = np.flatnonzero(mask)
    if idx.size < 4 or int(idx[-1]) - int(idx[0]) + 1 != idx.size:
        raise ConfigError(
            "no contiguous adiabatic window with at least 4 positive points",
            field=None,
        )
    fit = fit_power_law(t, dist, window=(int(idx[0]), int(idx[-1]) + 1))
    print(
        f"slope={fit.slope:.17g}\nintercept={fit.intercept:.17g}\n"
        f"r_squared={fit.r_squared:.17g}\nwindow=[{fit.window[0]},{fit.window[1]})"
    )
    if args.plot:
        from .plotting import fit_figure

        fig_path = os.path.splitext(args.infile)[0] + "_fit.png"
        fit_figure(t, dist, fit, fig_path)
        print(f"wrote {fig_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protmeas",
        description="Strong, protective and generalized quantum measurement simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single measurement run")
    p_run.add_argument("--config", required=True, help="measurement config JSON")
    p_run.add_argument("--mode", choices=["strong", "protective", "generalized"],
                       help="override the config's mode")
    p_run.add_argument("--seed", type=int, help="override the config's seed")
    p_run.add_argument("--out", default=".", help="output directory")
    p_run.add_argument("--format", choices=["csv", "json"], default="csv")
    p_run.add_argument("--plot", action="store_true", help="render figures")
    p_run.add_argument("--workers", type=int, help="worker threads")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="log-spaced interaction-time sweep")
    p_sweep.add_argument("--t-min", type=float, required=True, dest="t_min")
    p_sweep.add_argument("--t-max", type=float, required=True, dest="t_max")
    p_sweep.add_argument("--points", type=int, required=True)
    p_sweep.add_argument("--config", help="base measurement config JSON")
    p_sweep.add_argument("--theta", type=float, default=float(np.pi / 3),
                         help="tilt angle of the built-in qubit benchmark")
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--out", default=".")
    p_sweep.add_argument("--format", choices=["csv", "json"], default="csv")
    p_sweep.add_argument("--plot", action="store_true")
    p_sweep.add_argument("--workers", type=int)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cold = sub.add_parser("coldatom", help="cold-atom proposal")
    p_cold.add_argument("--params", help="coldatom config JSON (defaults if omitted)")
    p_cold.add_argument("--level", choices=["analytic", "full"], default="analytic")
    p_cold.add_argument("--out", default=".")
    p_cold.add_argument("--format", choices=["csv", "json"], default="csv")
    p_cold.add_argument("--plot", action="store_true")
    p_cold.set_defaults(func=_cmd_coldatom)

    p_fit = sub.add_parser("fit", help="power-law fit of a sweep CSV")
    p_fit.add_argument("--in", required=True, dest="infile", help="sweep CSV path")
    p_fit.add_argument("--plot", action="store_true")
    p_fit.set_defaults(func=_cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (OutputError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ProtmeasError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
