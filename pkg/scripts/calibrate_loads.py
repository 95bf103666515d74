#!/usr/bin/env python3
"""Recalibrate the per-load FTP arrival rates for a scenario configuration.

Prints a JSON object suitable for the ftp_arrival_rate_per_s config field:

    python scripts/calibrate_loads.py --config configs/indoor_default.json
"""

import argparse
import json

from coexist_sim.harness import ScenarioConfig, calibrate_load


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/indoor_default.json")
    parser.add_argument("--replications", type=int, default=10)
    parser.add_argument("--loads", nargs="+", default=["low", "medium", "high"])
    args = parser.parse_args()

    table = {}
    for load in args.loads:
        cfg = ScenarioConfig.from_json_file(args.config)
        rate, occupancy = calibrate_load(load, cfg, replications=args.replications)
        table[load] = round(rate, 4)
        print(f"# {load}: rate {rate:.4f} files/s/client -> occupancy {occupancy:.3f}")
    print(json.dumps({"ftp_arrival_rate_per_s": table}, indent=2))


if __name__ == "__main__":
    main()
