"""Command line entry point: ``frankoseen run <preset|config.toml>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .flow import EnergyIncrease
from .scenarios import PRESETS, ConfigError, run_scenario


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="frankoseen",
                                description="Frank-Oseen gradient flow for nematic director fields.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a preset or a TOML scenario file",
                       description=f"Presets: {', '.join(sorted(PRESETS))}.")
    r.add_argument("scenario", help="preset name or path to a TOML config")
    r.add_argument("--h", type=float, help="mesh spacing (tau follows unless --tau is given)")
    r.add_argument("--tau", type=float, help="pseudo-time step")
    r.add_argument("--eps", type=float, help="stopping tolerance")
    r.add_argument("--max-steps", type=int, help="step limit")
    r.add_argument("--out", help="output directory (default: config's output.dir or ./run-<name>)")
    r.add_argument("--vtk-every", type=int, default=0, help="also write step_XXXXX.vtk every N steps")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out
    if out is None and args.scenario in PRESETS:
        out = f"run-{args.scenario}"
    try:
        report = run_scenario(args.scenario, out, vtk_every=args.vtk_every, h=args.h,
                              tau=args.tau, eps=args.eps, max_steps=args.max_steps)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except EnergyIncrease as e:
        print(f"aborted: {e} (partial outputs kept)", file=sys.stderr)
        return 3
    summary = {"name": report.name, "iterations": report.iterations, "converged": report.converged,
               "E_initial": report.initial.total, "E_final": report.final.total,
               "err1": report.err1, "err_inf": report.err_inf, "files": report.files}
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
