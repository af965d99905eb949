"""Command-line entry point: one subcommand per study."""

from __future__ import annotations

import argparse
import sys

from . import harness
from .config import ConfigError, load_config

_COMMANDS = {
    "simulate-bloch": (harness.run_bloch_simulation, "integrate the Bloch system per eps"),
    "simulate-rate": (harness.run_rate_simulation, "integrate the selected rate equation"),
    "rates": (harness.run_rate_tables, "emit rate tables and the splitting identity"),
    "converge": (harness.run_convergence_study, "Bloch-vs-rate error slopes over eps"),
    "average-oracle": (harness.run_averaging_oracle, "Cesaro average against the closed form"),
    "timelayer": (harness.run_timelayer_study, "layer decay and plateau scalings"),
    "equilibrium": (harness.run_equilibrium_study, "relaxation to the blockwise equilibrium"),
    "dioph": (harness.run_dioph_suite, "small-divisor margins and genericity"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blochrate",
        description="Desk-scale studies of damped driven level systems and their rate limits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the TOML configuration")
        p.add_argument("--out", required=True, help="output directory for result.json and CSVs")
        p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    run, _ = _COMMANDS[args.command]
    try:
        cfg = load_config(args.config)
        result = run(cfg, seed=args.seed, jobs=args.jobs)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = harness.write_study(args.out, result)
    status = "PASS" if result.passed else "FAIL"
    print(f"{result.name}: {status} ({len(result.rows)} rows) -> {out}")
    for note in result.notes:
        print(f"  {note}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
