"""Command-line entry points: run, validate, calibrate."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import ScenarioConfig, calibrate_load, emit_results, run_two_step


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coexist-sim",
        description="LAA / Wi-Fi unlicensed-spectrum coexistence simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the two-step evaluation")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None, help="override master seed")
    run.add_argument("--replications", type=int, default=None)
    run.add_argument("--load", choices=["low", "medium", "high"], default=None)
    run.add_argument("--step", choices=["1", "2", "both"], default="both")
    run.add_argument("--out", required=True)
    run.add_argument("--trace", action="store_true",
                     help="write per-replication event logs")
    run.add_argument("--workers", type=int, default=1)

    val = sub.add_parser("validate", help="check a scenario configuration file")
    val.add_argument("--config", required=True)

    cal = sub.add_parser("calibrate", help="find the FTP rate for a load class")
    cal.add_argument("--config", required=True)
    cal.add_argument("--load", choices=["low", "medium", "high"], required=True)
    cal.add_argument("--replications", type=int, default=10)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        try:
            ScenarioConfig.from_json_file(args.config)
        except (ValueError, OSError, json.JSONDecodeError) as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 2
        print("config OK")
        return 0

    cfg = ScenarioConfig.from_json_file(args.config)
    if args.command == "calibrate":
        rate, occupancy = calibrate_load(args.load, cfg,
                                         replications=args.replications)
        print(json.dumps({"load": args.load, "ftp_arrival_rate_per_s": rate,
                          "achieved_occupancy": occupancy}))
        return 0

    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.replications is not None:
        cfg.replications = args.replications
    steps = {"1": (1,), "2": (2,), "both": (1, 2)}[args.step]
    report = run_two_step(cfg, load=args.load, steps=steps, trace=args.trace,
                          workers=args.workers)
    paths = emit_results(report, args.out)
    print(f"wrote {paths['results']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
