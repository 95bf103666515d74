"""plot_results: turn a results.csv into the two comparison charts."""

from __future__ import annotations

import argparse
import os
import sys

from .charts import plot_upt_improvement, plot_voip_outage
from .results import ResultTable


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot_results",
        description="Render UPT-improvement and VoIP-outage charts from a "
                    "coexist-sim results.csv")
    parser.add_argument("--in", dest="results", required=True,
                        help="path to results.csv")
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--operator", type=int, default=1,
                        help="non-replaced operator to chart (default 1)")
    args = parser.parse_args(argv)

    try:
        table = ResultTable.from_csv(args.results)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    os.makedirs(args.out_dir, exist_ok=True)
    upt_png = os.path.join(args.out_dir, "upt_improvement.png")
    try:
        plot_upt_improvement(table, upt_png, args.operator)
        print(f"wrote {upt_png}")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    voip_png = os.path.join(args.out_dir, "voip_outage.png")
    try:
        plot_voip_outage(table, voip_png, args.operator)
        print(f"wrote {voip_png}")
    except ValueError as exc:
        # FTP-only runs carry no VoIP column data; the UPT chart stands alone.
        print(f"note: VoIP chart skipped: {exc}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
