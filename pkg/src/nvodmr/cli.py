"""Command-line interface: config-driven sweeps, optimization runs and
figure-data emission.

Subcommands map onto the runners; ``--output``/``--format``/``--threads``/
``--seed`` override the corresponding config sections.  Validation failures
print machine-readable JSON on stderr and exit nonzero.  ``--plot`` renders
a matplotlib figure next to the delimited output.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config, validate_config
from .runners import RUNNERS, run_optimize


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvodmr",
        description="Model and optimize CW and pulsed NV ODMR magnetometry protocols.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="JSON run configuration")
        p.add_argument("--output", help="output path (overrides config)")
        p.add_argument("--format", choices=["csv", "json"], help="output format (overrides config)")
        p.add_argument("--threads", type=int, help="worker pool size (overrides config)")
        p.add_argument("--seed", type=int,
                       help="recorded in metadata; reserved, deterministic paths ignore it")
        p.add_argument("--plot", action="store_true",
                       help="also render a PNG figure next to the output")

    for name in ("cw-sweep", "pulsed-sweep", "ensemble", "hyperfine", "optimize"):
        p = sub.add_parser(name, help=f"run the {name.replace('-', ' ')} scenario")
        add_common(p)

    v = sub.add_parser("validate-config", help="validate a config and echo the resolved form")
    v.add_argument("--config", required=True)
    return parser


def _apply_overrides(resolved: dict, args) -> dict:
    if args.output:
        resolved["output"]["path"] = args.output
    if args.format:
        resolved["output"]["format"] = args.format
    if args.threads:
        resolved["threads"] = args.threads
    if args.seed is not None:
        resolved["seed"] = args.seed
    return resolved


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        resolved = validate_config(load_config(args.config))
        if args.command == "validate-config":
            json.dump(resolved, sys.stdout, indent=1, sort_keys=True)
            sys.stdout.write("\n")
            return 0
        resolved = _apply_overrides(resolved, args)

        if args.command == "optimize":
            table = run_optimize(resolved)
        else:
            expected_scenario, runner = RUNNERS[args.command]
            if resolved["scenario"] != expected_scenario:
                raise ConfigError(
                    f"subcommand {args.command!r} needs scenario {expected_scenario!r}, "
                    f"config has {resolved['scenario']!r}", "$.scenario")
            table = runner(resolved)

        out_path = Path(resolved["output"]["path"])
        if resolved["output"]["format"] == "json":
            table.write_json(out_path)
        else:
            table.write_csv(out_path)
        print(f"wrote {len(table.rows)} rows to {out_path}")

        if args.plot:
            from .plots import render_table
            figure_path = out_path.with_suffix(".png")
            render_table(table, figure_path)
            print(f"rendered figure to {figure_path}")
        return 0
    except ConfigError as err:
        json.dump(err.to_json(), sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
