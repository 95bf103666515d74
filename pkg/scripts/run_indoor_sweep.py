#!/usr/bin/env python3
"""Run the two-step indoor evaluation across all three load classes.

Writes one results directory per load class plus a combined CSV, e.g.:

    python scripts/run_indoor_sweep.py --config configs/indoor_default.json \
        --out out/sweep --replications 20
"""

import argparse
import csv
import os

from coexist_sim.harness import (CSV_COLUMNS, ScenarioConfig, emit_results,
                                 run_two_step)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/indoor_default.json")
    parser.add_argument("--out", default="out/sweep")
    parser.add_argument("--replications", type=int, default=None)
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = parser.parse_args()

    combined = []  # (load_target, row)
    for load in ("low", "medium", "high"):
        cfg = ScenarioConfig.from_json_file(args.config)
        if args.replications:
            cfg.replications = args.replications
        report = run_two_step(cfg, load=load, steps=(1, 2), workers=args.workers)
        paths = emit_results(report, os.path.join(args.out, load))
        combined.extend((load, row) for row in report.rows)
        print(f"{load}: {paths['results']}")

    combined_path = os.path.join(args.out, "combined.csv")
    with open(combined_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS + ["load_target"])
        for load, row in combined:
            writer.writerow([getattr(row, c) for c in CSV_COLUMNS] + [load])
    print(f"combined: {combined_path}")


if __name__ == "__main__":
    main()
