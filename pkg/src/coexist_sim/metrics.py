"""Performance and RRM measurement over recorded traces.

User-perceived throughput (file bits over active download time, excluding the
idle wait before service), VoIP outage, symbol-granularity RSSI averaging and
aggregation, and threshold-based channel occupancy.  Everything here is a
pure function of recorded values and safe to evaluate in parallel across
replications.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

# One OFDM symbol of airtime: 14 symbols per 1 ms subframe (normal CP).
L1_SAMPLES_PER_MS = 14
OFDM_SYMBOL_NS = 1_000_000 / L1_SAMPLES_PER_MS


@dataclass
class FileRecord:
    """Completed file transfer; active_time excludes pre-service queueing."""

    bytes: int
    arrival: int
    first_service: int
    completion: int

    def __post_init__(self):
        if not self.arrival <= self.first_service <= self.completion:
            raise ValueError("require arrival <= first_service <= completion")

    @property
    def active_time_ns(self) -> int:
        return self.completion - self.first_service


@dataclass
class RssiSample:
    """One L1 RSSI sample spanning a single OFDM symbol."""

    value_dbm: float
    duration_ns: float = OFDM_SYMBOL_NS


def upt_bps(record: FileRecord) -> float:
    """Per-file user-perceived throughput in bits per second."""
    if record.bytes <= 0:
        raise ValueError("zero-byte file carries no throughput")
    active = record.active_time_ns
    if active <= 0:
        raise ValueError("file has no active download time")
    return record.bytes * 8 * 1e9 / active


def upt_summary(records: Sequence[FileRecord]) -> dict[str, float]:
    """Mean and linear-interpolation percentiles of per-file UPT values."""
    if not records:
        raise ValueError("no completed files to summarize")
    values = np.array([upt_bps(r) for r in records])
    p5, p50, p95 = np.percentile(values, [5, 50, 95], method="linear")
    return {"mean": float(values.mean()), "p5": float(p5),
            "p50": float(p50), "p95": float(p95)}


def rssi_report(l1_samples_dbm: Sequence[float], agg_duration_ms: int) -> np.ndarray:
    """Aggregate consecutive L1 samples into 1..5 ms measurement windows.

    Each output value is the linear-domain (mW) mean of one window of
    14 * agg_duration_ms samples, returned in dBm.  A trailing partial window
    is discarded.
    """
    if not 1 <= agg_duration_ms <= 5:
        raise ValueError("aggregation duration must be 1..5 ms")
    samples = np.asarray(l1_samples_dbm, dtype=float)
    window = L1_SAMPLES_PER_MS * agg_duration_ms
    if samples.size < window:
        raise ValueError("fewer samples than one aggregation window")
    n = samples.size // window
    mw = 10.0 ** (samples[:n * window] / 10.0)
    means = mw.reshape(n, window).mean(axis=1)
    return 10.0 * np.log10(means)


def channel_occupancy(l1_samples_dbm: Sequence[float], threshold_dbm: float) -> float:
    """Percentage of samples sensed busy, i.e. strictly above the threshold."""
    samples = np.asarray(l1_samples_dbm, dtype=float)
    if samples.size == 0:
        raise ValueError("no RSSI samples")
    return 100.0 * float(np.count_nonzero(samples > threshold_dbm)) / samples.size


def voip_outage(per_user_delays: Mapping[object, Iterable[Optional[int]]],
                delay_budget_ns: int,
                late_fraction: float = 0.02) -> float:
    """Fraction of VoIP users in outage.

    A user is in outage when more than `late_fraction` of its packets exceed
    the delay budget; a dropped packet (delay None) counts as exceeding.
    """
    if not per_user_delays:
        raise ValueError("no VoIP users")
    in_outage = 0
    for _, delays in per_user_delays.items():
        delays = list(delays)
        if not delays:
            continue
        late = sum(1 for d in delays if d is None or d > delay_budget_ns)
        if late > late_fraction * len(delays):
            in_outage += 1
    return in_outage / len(per_user_delays)


def l1_rssi_samples_dbm(edges, levels_mw, horizon_ns: int) -> np.ndarray:
    """Per-OFDM-symbol linear-mean RSSI from a piecewise-constant power trace.

    `edges`/`levels_mw` come from Medium.energy_timeline_mw over [0, horizon].
    The running energy integral of a piecewise-constant signal is piecewise
    linear, so per-symbol means fall out of interpolating it at bin edges.
    """
    n = horizon_ns * L1_SAMPLES_PER_MS // 1_000_000  # exact symbol count
    if n == 0:
        return np.array([])
    edges = np.asarray(edges, dtype=float)
    levels = np.asarray(levels_mw, dtype=float)
    # Cumulative integral of power at each breakpoint.
    seg = np.diff(edges) * levels
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    bin_edges = np.arange(n + 1) * OFDM_SYMBOL_NS
    cum_at_bins = np.interp(bin_edges, edges, cum)
    mean_mw = np.diff(cum_at_bins) / OFDM_SYMBOL_NS
    return 10.0 * np.log10(np.maximum(mean_mw, 1e-300))
