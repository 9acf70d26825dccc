"""Command-line runner: ``mfl-lab <subcommand> --config <path> [options]``.

Subcommands map one-to-one onto the experiment kinds (flow, rates, afi,
kernel-check, sandwich, mfl-particles, traj, spectrum, bounds).  Configs are
TOML; outputs are CSV files, grid snapshots and a JSON manifest in the output
directory.  Exit codes: 0 all assertions passed, 2 an assertion failed,
3 configuration error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import AssertionFailure, ConfigError, MflLabError, NoConvergence
from .experiments import RUNNERS

EXIT_OK = 0
EXIT_ASSERTION = 2
EXIT_CONFIG = 3


def load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def run_one(kind: str, config_path: str, out: str | None, seed: int | None,
            emit_svg: bool) -> dict:
    cfg = load_config(config_path)
    cfg_kind = cfg.get("kind", kind)
    if cfg_kind != kind:
        raise ConfigError(f"config kind {cfg_kind!r} does not match subcommand {kind!r}")
    cfg["kind"] = kind
    if seed is not None:
        cfg["seed"] = seed
    outdir = out or cfg.get("out") or os.path.join(
        "out", f"{kind}-{os.path.splitext(os.path.basename(config_path))[0]}"
    )
    return RUNNERS[kind](cfg, outdir, emit_svg=emit_svg)


def _print_summary(kind: str, summary: dict) -> None:
    if kind == "spectrum":
        with open(summary["csv"], "r", encoding="utf-8") as fh:
            sys.stdout.write(fh.read())
        print(f"# threshold={summary['threshold']:.12g} "
              f"negative_mass={summary['negative_mass']:.12g}")
        return
    if kind == "bounds":
        for line in summary["lines"]:
            print(line)
        return
    for key, value in summary.items():
        if isinstance(value, (int, float, str)) or value is None:
            print(f"{key}={value}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfl-lab",
        description="Configuration-driven experiments for density flows on the torus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in RUNNERS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", action="append", required=True,
                       help="TOML config path (repeat to run a batch)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="max concurrent experiments in a batch")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--emit-svg", action="store_true", help="also write SVG plots")
    args = parser.parse_args(argv)

    jobs = max(1, args.jobs)
    configs = args.config
    if len(configs) > 1 and args.out is not None:
        print("error: --out cannot be combined with a config batch", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if jobs == 1 or len(configs) == 1:
            for path in configs:
                summary = run_one(args.command, path, args.out, args.seed, args.emit_svg)
                _print_summary(args.command, summary)
        else:
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = {
                    pool.submit(run_one, args.command, path, None, args.seed,
                                args.emit_svg): path
                    for path in configs
                }
                for fut in concurrent.futures.as_completed(futures):
                    _print_summary(args.command, fut.result())
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AssertionFailure, NoConvergence) as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    except MflLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
