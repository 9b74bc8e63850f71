"""Benchmark command-line interface.

Subcommands: mc-pnp, mc-ransac, drift, crlb, noise-est.  Each accepts
--config (key = value file), --seed, --out, --runs, and per-field overrides
for every SimConfig entry.  Results are CSV; a fixed seed reproduces the
output byte for byte.  Wall-clock timings (mc-ransac) go to a separate file
via --timing-out because they are inherently non-reproducible.

On failure the process exits nonzero after printing a single-line JSON
error record to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import bench
from .errors import GravposeError
from .sim import SimConfig, parse_config_file


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out", required=True, help="output CSV path")
    parser.add_argument("--runs", type=int, help="Monte Carlo runs per grid entry")
    for f in dataclasses.fields(SimConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            parser.add_argument(flag, type=_parse_bool, metavar="BOOL")
        elif f.type in ("int", int):
            parser.add_argument(flag, type=int)
        else:
            parser.add_argument(flag, type=float)


def _parse_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _parse_grid(text: str, cast):
    return tuple(cast(part) for part in text.split(",") if part.strip())


def build_config(args: argparse.Namespace) -> SimConfig:
    values = parse_config_file(args.config) if args.config else {}
    for f in dataclasses.fields(SimConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if args.seed is not None:
        values["seed"] = args.seed
    return SimConfig(**values)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gravpose", description="4-DOF pose estimation benchmarks"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mc-pnp", help="consistency / CRLB-attainment Monte Carlo")
    _add_common(p)
    p.add_argument("--n-grid", default="25,100,400,1600", help="comma-separated point counts")

    p = sub.add_parser("mc-ransac", help="3-point vs 5-point consensus Monte Carlo")
    _add_common(p)
    p.add_argument("--outlier-grid", default="0.1,0.2,0.3", help="comma-separated rates")
    p.add_argument("--timing-out", help="optional CSV for wall-clock medians")

    p = sub.add_parser("drift", help="long-horizon drift experiment")
    _add_common(p)

    p = sub.add_parser("crlb", help="CRLB sweep over point counts")
    _add_common(p)
    p.add_argument("--n-grid", default="25,100,400,1600", help="comma-separated point counts")

    p = sub.add_parser("noise-est", help="noise-variance estimator sweep")
    _add_common(p)
    p.add_argument("--sigma-grid", default="1,2.5,5", help="comma-separated pixel sigmas")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    cfg = build_config(args)
    if args.command == "mc-pnp":
        result = bench.run_mc_pnp(cfg, _parse_grid(args.n_grid, int), runs=args.runs or 700)
        bench.emit_csv(result, args.out)
    elif args.command == "mc-ransac":
        result, timing = bench.run_mc_ransac(
            cfg, _parse_grid(args.outlier_grid, float), runs=args.runs or 400
        )
        bench.emit_csv(result, args.out)
        if args.timing_out:
            bench.emit_csv(timing, args.timing_out)
    elif args.command == "drift":
        result = bench.run_drift(cfg)
        bench.emit_csv(result, args.out)
    elif args.command == "crlb":
        result = bench.run_crlb(cfg, _parse_grid(args.n_grid, int), runs=args.runs or 50)
        bench.emit_csv(result, args.out)
    elif args.command == "noise-est":
        result = bench.run_noise_est(
            cfg, _parse_grid(args.sigma_grid, float), runs=args.runs or 20
        )
        bench.emit_csv(result, args.out)
    else:  # pragma: no cover - argparse enforces the choice
        raise ValueError(f"unknown command {args.command!r}")
    return 0


def main() -> None:
    try:
        sys.exit(run())
    except (GravposeError, ValueError, OSError) as err:
        print(
            json.dumps({"error": type(err).__name__, "message": str(err)}),
            file=sys.stderr,
        )
        sys.exit(1)


if __name__ == "__main__":
    main()
