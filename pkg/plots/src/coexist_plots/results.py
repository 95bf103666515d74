"""Parsing and pairing of the simulator's results.csv schema.

This package talks to the simulator only through that file format; the column
list below is the contract.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
REQUIRED_COLUMNS = [
    "replication", "step", "operator", "technology", "load_class",
    "mean_occupancy", "upt_mean_mbps", "upt_p5_mbps", "upt_p50_mbps",
    "upt_p95_mbps", "voip_outage", "channel_occupancy_pct",
    "files_completed", "files_dropped",
]

_INT_FIELDS = {"replication", "step", "operator", "files_completed", "files_dropped"}
_STR_FIELDS = {"technology", "load_class"}


@dataclass
class ResultRow:
    replication: int
    step: int
    operator: int
    technology: str
    load_class: str
    mean_occupancy: float
    upt_mean_mbps: float
    upt_p5_mbps: float
    upt_p50_mbps: float
    upt_p95_mbps: float
    voip_outage: float
    channel_occupancy_pct: float
    files_completed: int
    files_dropped: int


@dataclass
class PairedReplication:
    replication: int
    load_class: str
    step1: ResultRow
    step2: ResultRow


class ResultTable:
    """results.csv rows with schema validation and step-1/step-2 pairing."""

    def __init__(self, rows: list[ResultRow]):
        self.rows = rows

    @classmethod
    def from_csv(cls, path: str) -> "ResultTable":
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            header = reader.fieldnames or []
            missing = [c for c in REQUIRED_COLUMNS if c not in header]
            if missing:
                raise ValueError(f"results file {path!r} is missing required "
                                 f"columns: {missing}")
            rows = []
            for record in reader:
                kwargs = {}
                for col in REQUIRED_COLUMNS:
                    raw = record[col]
                    if col in _STR_FIELDS:
                        kwargs[col] = raw
                    elif col in _INT_FIELDS:
                        kwargs[col] = int(raw)
                    else:
                        kwargs[col] = float(raw)
                rows.append(ResultRow(**kwargs))
        if not rows:
            raise ValueError(f"results file {path!r} contains no rows")
        return cls(rows)

    def paired(self, operator: int = 1) -> list[PairedReplication]:
        """Step-1/step-2 row pairs for one operator, erroring on absentees."""
        by_rep: dict[int, dict[int, ResultRow]] = {}
        for row in self.rows:
            if row.operator == operator:
                by_rep.setdefault(row.replication, {})[row.step] = row
        missing = sorted(rep for rep, steps in by_rep.items()
                         if 1 not in steps or 2 not in steps)
        if missing:
            raise ValueError(
                f"replications missing a step for operator {operator}: {missing}")
        if not by_rep:
            raise ValueError(f"no rows for operator {operator}")
        return [PairedReplication(rep, steps[1].load_class, steps[1], steps[2])
                for rep, steps in sorted(by_rep.items())]


def _mean_std(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def upt_improvement_by_load(table: ResultTable, operator: int = 1,
                            field: str = "upt_mean_mbps") -> dict[str, dict]:
    """Per-load-class relative UPT change (step2 - step1)/step1 per pair."""
    groups: dict[str, list[float]] = {}
    for pair in table.paired(operator):
        base = getattr(pair.step1, field)
        after = getattr(pair.step2, field)
        if math.isnan(base) or math.isnan(after) or base <= 0:
            continue
        groups.setdefault(pair.load_class, []).append((after - base) / base)
    if not groups:
        raise ValueError("no usable UPT pairs in the table")
    out = {}
    for load, deltas in sorted(groups.items()):
        mean, std = _mean_std(deltas)
        out[load] = {"mean": mean, "std": std, "n": len(deltas), "values": deltas}
    return out


def voip_outage_by_load(table: ResultTable, operator: int = 1) -> dict[str, dict]:
    """Per-load-class mean outage for step 1 and step 2."""
    groups: dict[str, list[tuple[float, float]]] = {}
    for pair in table.paired(operator):
        o1, o2 = pair.step1.voip_outage, pair.step2.voip_outage
        if math.isnan(o1) or math.isnan(o2):
            continue
        groups.setdefault(pair.load_class, []).append((o1, o2))
    if not groups:
        raise ValueError("no VoIP outage data in the table")
    out = {}
    for load, pairs in sorted(groups.items()):
        m1, s1 = _mean_std([p[0] for p in pairs])
        m2, s2 = _mean_std([p[1] for p in pairs])
        out[load] = {"step1_mean": m1, "step1_std": s1,
                     "step2_mean": m2, "step2_std": s2, "n": len(pairs)}
    return out
