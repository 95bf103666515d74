"""Traffic generation and per-node transmit buffers.

FTP load is Poisson arrivals of fixed-size files per client; VoIP streams are
strictly periodic packets with a delay budget.  Buffers track their non-empty
("occupant") time, which drives the low/medium/high load classification.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .sim_core import SEC, RngStream


@dataclass
class FtpFlowConfig:
    arrival_rate_per_s: float = 1.0
    file_size_bytes: int = 500_000

    def __post_init__(self):
        if self.arrival_rate_per_s <= 0:
            raise ValueError("arrival_rate_per_s must be positive")
        if self.file_size_bytes <= 0:
            raise ValueError("file_size_bytes must be positive")


@dataclass
class VoipFlowConfig:
    packet_interval_ms: int = 20
    payload_bytes: int = 100
    delay_budget_ms: int = 50

    def __post_init__(self):
        if self.packet_interval_ms <= 0:
            raise ValueError("packet_interval_ms must be positive")


@dataclass
class FileJob:
    """One FTP file queued at its serving node."""

    flow_id: str
    operator_id: int
    src_id: str
    dest_id: str
    bytes_total: int
    arrival: int
    remaining: int = -1
    in_flight: int = 0
    first_service: Optional[int] = None
    completed_at: Optional[int] = None
    dropped: bool = False

    def __post_init__(self):
        if self.remaining < 0:
            self.remaining = self.bytes_total


@dataclass
class VoipPacket:
    flow_id: str
    operator_id: int
    user_id: str
    src_id: str
    dest_id: str
    payload_bytes: int
    arrival: int
    remaining: int = -1
    in_flight: int = 0
    delivered_at: Optional[int] = None
    dropped: bool = False

    def __post_init__(self):
        if self.remaining < 0:
            self.remaining = self.payload_bytes


class TxBuffer:
    """FIFO transmit queue with VoIP-before-FTP dequeue and a busy-time log.

    The buffer counts as occupied from the first enqueue until the last item
    completes or is dropped; disjoint busy intervals accumulate into busy_ns.
    """

    def __init__(self):
        self.voip: deque[VoipPacket] = deque()
        self.files: deque[FileJob] = deque()
        self.busy_ns = 0
        self._busy_since: Optional[int] = None
        self.bytes_generated = 0
        self.bytes_delivered = 0
        self.bytes_dropped = 0

    def __len__(self) -> int:
        return len(self.voip) + len(self.files)

    def push_file(self, job: FileJob, now: int) -> None:
        self._mark_busy(now)
        self.files.append(job)
        self.bytes_generated += job.bytes_total

    def push_voip(self, pkt: VoipPacket, now: int) -> None:
        self._mark_busy(now)
        self.voip.append(pkt)
        self.bytes_generated += pkt.payload_bytes

    def head(self):
        """Next item to serve: VoIP packets ahead of file chunks."""
        if self.voip:
            return self.voip[0]
        if self.files:
            return self.files[0]
        return None

    def pop_voip(self, now: int) -> VoipPacket:
        pkt = self.voip.popleft()
        self._mark_idle_if_empty(now)
        return pkt

    def pop_file(self, now: int) -> FileJob:
        job = self.files.popleft()
        self._mark_idle_if_empty(now)
        return job

    def remove(self, item, now: int) -> None:
        """Remove a completed or dropped item wherever it sits in the queue."""
        if isinstance(item, VoipPacket):
            self.voip.remove(item)
        else:
            self.files.remove(item)
        self._mark_idle_if_empty(now)

    def _mark_busy(self, now: int) -> None:
        if self._busy_since is None and len(self) == 0:
            self._busy_since = now

    def _mark_idle_if_empty(self, now: int) -> None:
        if len(self) == 0 and self._busy_since is not None:
            self.busy_ns += now - self._busy_since
            self._busy_since = None

    def finalize(self, horizon: int) -> None:
        """Close an open busy interval at the end of the run."""
        if self._busy_since is not None:
            self.busy_ns += horizon - self._busy_since
            self._busy_since = None


def generate_ftp_arrivals(cfg: FtpFlowConfig, stream: RngStream, t_end: int) -> list[int]:
    """Poisson arrival instants (ns) for one client over [0, t_end)."""
    out = []
    t = 0.0
    while True:
        t += stream.expovariate(cfg.arrival_rate_per_s)
        t_ns = round(t * SEC)
        if t_ns >= t_end:
            return out
        out.append(t_ns)


def generate_voip_arrivals(cfg: VoipFlowConfig, stream: RngStream, t_end: int) -> list[int]:
    """Strictly periodic packet instants with a random initial phase."""
    interval = cfg.packet_interval_ms * 1_000_000
    start = round(stream.uniform(0, cfg.packet_interval_ms) * 1_000_000)
    return list(range(start, t_end, interval))


def buffer_occupancy(buffer: TxBuffer, horizon: int) -> float:
    """Fraction of the horizon during which the buffer held queued work."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    return buffer.busy_ns / horizon


class LoadClass(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    OUT_OF_BAND = "out_of_band"


LOAD_BANDS = {
    LoadClass.LOW: (0.15, 0.30),
    LoadClass.MEDIUM: (0.35, 0.50),
    LoadClass.HIGH: (0.60, 0.80),
}


def classify_load(mean_occupancy: float) -> LoadClass:
    """Map mean AP buffer occupancy onto the evaluation load classes.

    Values in the gaps between bands are surfaced as OUT_OF_BAND rather than
    silently binned to the nearest class.
    """
    if not 0.0 <= mean_occupancy <= 1.0:
        raise ValueError("occupancy must lie in [0, 1]")
    for cls, (lo, hi) in LOAD_BANDS.items():
        if lo <= mean_occupancy <= hi:
            return cls
    return LoadClass.OUT_OF_BAND
