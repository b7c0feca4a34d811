"""Command line entry point: ``stcutfem run`` and ``stcutfem converge``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields

import numpy as np

from .harness import ConfigError, SimulationConfig, SimulationError, convergence_table, run_simulation


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with keys mirroring these flags")
    p.add_argument("--example", type=int, choices=(1, 2, 3, 4))
    p.add_argument("--ny", type=int)
    p.add_argument("--k-ratio", type=float, help="time step k = C h")
    p.add_argument("--t-end", type=float)
    p.add_argument("--time-quadrature", choices=("trapezoid", "simpson"))
    p.add_argument("--coupling", choices=("langmuir", "henry", "frumkin"))
    p.add_argument("--frumkin-a", type=float)
    p.add_argument("--conserve-mass", type=_on_off, metavar="{on,off}")
    p.add_argument("--levelset", choices=("advected", "analytic"))
    p.add_argument("--tau-b", type=float)
    p.add_argument("--tau-s", type=float)
    p.add_argument("--t-eval", type=float)
    p.add_argument("--newton-tol", type=float)
    p.add_argument("--out", help="output directory for CSV files")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stcutfem", description="Space-time CutFEM for bulk-surface surfactant transport")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one simulation")
    _add_common(run)
    run.add_argument("--nx", type=int)
    run.add_argument("--condition", action="store_true", help="estimate the condition number of every slab matrix")
    run.add_argument("--export-every", type=int, help="write interface and field frames every N slabs")
    conv = sub.add_parser("converge", help="spatial convergence table at t_eval")
    _add_common(conv)
    conv.add_argument("--levels", type=int, nargs="+", required=True, help="mesh sizes nx, coarsest first")
    conv.add_argument("--mode", choices=("exact", "consecutive"))
    return parser


def config_from_args(args: argparse.Namespace) -> SimulationConfig:
    names = {f.name for f in fields(SimulationConfig)}
    given = {k: v for k, v in vars(args).items() if k in names and v is not None}
    if args.config:
        return SimulationConfig.from_file(args.config, **given)
    return SimulationConfig(**given)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "run":
            res = run_simulation(cfg)
            mass = np.array([r.rel_mass_error for r in res.records])
            iters = [r.newton_iterations for r in res.records]
            print(f"example {cfg.example}: {len(res.records)} slabs, h={res.h:.6g}, k={res.k:.6g}")
            print(f"max |relative mass error| = {np.abs(mass).max():.3e}")
            print(f"relative area change at t_end = {res.records[-1].rel_area_change:.3e}")
            print(f"Newton iterations: max {max(iters)}, mean {np.mean(iters):.2f}")
            kappa = [r.kappa for r in res.records if r.kappa is not None]
            if kappa:
                print(f"condition estimate: min {min(kappa):.3e}, max {max(kappa):.3e}")
        else:
            report, _ = convergence_table(cfg, args.levels, args.mode)
            print(report.format())
    except (ConfigError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
