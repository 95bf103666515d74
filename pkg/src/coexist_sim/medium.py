"""Shared-channel model.

Node geometry, log-distance pathloss with frozen per-link shadowing, summed
energy sensing, SINR bookkeeping for overlapping transmissions, and a
truncated-Shannon rate map.  The medium is owned by a single simulation
instance and never schedules events itself; callers pass the current time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

THERMAL_NOISE_DBM_PER_HZ = -174.0


class NodeKind(str, Enum):
    LAA_ENB = "laa_enb"
    LAA_UE = "laa_ue"
    WIFI_AP = "wifi_ap"
    WIFI_STA = "wifi_sta"


class Technology(str, Enum):
    LAA = "laa"
    WIFI = "wifi"


class BurstKind(str, Enum):
    DATA = "data"
    DRS = "drs"
    RESERVATION = "reservation"
    ACK = "ack"


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0.0:
        return float("-inf")
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class NodePosition:
    """A node dropped inside the building footprint."""

    node_id: str
    operator_id: int
    kind: NodeKind
    x: float
    y: float


@dataclass
class ChannelModel:
    """Log-distance pathloss parameters and the receiver noise budget."""

    reference_loss_db: float = 46.4
    pathloss_exponent: float = 3.0
    shadowing_sigma_db: float = 6.0
    wall_loss_db: float = 0.0
    noise_figure_db: float = 9.0
    bandwidth_mhz: float = 20.0
    min_distance_m: float = 0.5

    def __post_init__(self):
        if self.bandwidth_mhz <= 0:
            raise ValueError("bandwidth_mhz must be positive")
        for name in ("reference_loss_db", "shadowing_sigma_db", "wall_loss_db",
                     "noise_figure_db"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def noise_floor_dbm(self) -> float:
        bw_hz = self.bandwidth_mhz * 1e6
        return THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(bw_hz) + self.noise_figure_db


@dataclass
class RateModel:
    """Truncated-Shannon SINR -> rate map with per-technology efficiency and cap.

    LAA's efficiency factor exceeds Wi-Fi's, standing in for LTE's better link
    adaptation; caps keep the same ratio so the ordering holds at every SINR.
    """

    eta_laa: float = 0.75
    eta_wifi: float = 0.65
    cap_laa_bps: float = 150e6
    cap_wifi_bps: float = 130e6
    decode_margin_db: float = 3.0
    control_sinr_db: float = 0.0
    dtx_sinr_db: float = -2.0

    def eta(self, tech: Technology) -> float:
        return self.eta_laa if tech is Technology.LAA else self.eta_wifi

    def cap_bps(self, tech: Technology) -> float:
        return self.cap_laa_bps if tech is Technology.LAA else self.cap_wifi_bps

    def rate_bps(self, sinr_db: float, tech: Technology, bandwidth_hz: float) -> float:
        sinr_lin = 10.0 ** (sinr_db / 10.0) if sinr_db != float("-inf") else 0.0
        raw = bandwidth_hz * self.eta(tech) * math.log2(1.0 + sinr_lin)
        return min(self.cap_bps(tech), raw)

    def sinr_for_rate_db(self, rate_bps: float, tech: Technology,
                         bandwidth_hz: float) -> float:
        """SINR implied by a rate; the cap maps to the SINR at the cap knee."""
        rate_bps = min(rate_bps, self.cap_bps(tech))
        if rate_bps <= 0:
            return float("-inf")
        lin = 2.0 ** (rate_bps / (bandwidth_hz * self.eta(tech))) - 1.0
        return mw_to_dbm(lin)


@dataclass
class ActiveTransmission:
    """One on-air emission with a predetermined [start, end) interval."""

    tx_node: NodePosition
    rx_node: Optional[NodePosition]
    start: int
    end: int
    tx_power_dbm: float
    carrier_id: int
    burst_kind: BurstKind
    technology: Technology
    bits: int = 0
    rate_bps: float = 0.0
    decode_sinr_min_db: Optional[float] = None
    # Filled in by the medium:
    serial: int = -1
    rx_signal_mw: float = 0.0
    interference: list[tuple[int, float]] = field(default_factory=list, repr=False)
    corrupted: bool = False

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError("transmission must have end > start")


class Sensor:
    """Summed received energy at a listener, with busy/idle edge callbacks.

    The medium keeps every registered sensor's linear-power accumulator up to
    date as transmissions start and stop; a sensor never sees its own node's
    emissions.  The optional Wi-Fi preamble level detects Wi-Fi-origin energy
    at a lower threshold than the plain energy-detection one.
    """

    def __init__(self, pos: NodePosition, threshold_dbm: float,
                 on_edge: Callable[[int, bool], None],
                 preamble_dbm: Optional[float] = None,
                 carrier_id: int = 0, noise_mw: float = 0.0):
        self.pos = pos
        self.carrier_id = carrier_id
        self.threshold_mw = dbm_to_mw(threshold_dbm)
        self.preamble_mw = dbm_to_mw(preamble_dbm) if preamble_dbm is not None else None
        self.on_edge = on_edge
        self.total_mw = noise_mw  # energy detection measures noise too
        self.wifi_mw = 0.0
        self.busy = False
        self.idle_since = 0

    def set_threshold_dbm(self, threshold_dbm: float) -> None:
        self.threshold_mw = dbm_to_mw(threshold_dbm)

    def _evaluate(self) -> bool:
        if self.total_mw >= self.threshold_mw:
            return True
        return self.preamble_mw is not None and self.wifi_mw >= self.preamble_mw

    def apply(self, now: int, delta_mw: float, is_wifi: bool) -> None:
        self.total_mw += delta_mw
        if is_wifi:
            self.wifi_mw += delta_mw
        busy = self._evaluate()
        if busy != self.busy:
            self.busy = busy
            if not busy:
                self.idle_since = now
            self.on_edge(now, busy)


class Medium:
    """Geometry plus the set of in-flight transmissions on one channel."""

    def __init__(self, channel: ChannelModel, rates: RateModel,
                 shadowing_db: Optional[dict[tuple[str, str], float]] = None):
        self.channel = channel
        self.rates = rates
        self.noise_mw = dbm_to_mw(channel.noise_floor_dbm)
        self.nodes: dict[str, NodePosition] = {}
        self._shadow = shadowing_db if shadowing_db is not None else {}
        self._gain: dict[tuple[str, str], float] = {}
        self._active: dict[int, ActiveTransmission] = {}
        self._serial = 0
        self.tx_log: list[ActiveTransmission] = []
        self._sensors: list[Sensor] = []

    # -- geometry ----------------------------------------------------------

    def add_node(self, pos: NodePosition) -> NodePosition:
        if pos.node_id in self.nodes:
            raise ValueError(f"duplicate node id {pos.node_id}")
        self.nodes[pos.node_id] = pos
        return pos

    def set_shadowing_db(self, a_id: str, b_id: str, value_db: float) -> None:
        self._shadow[self._link_key(a_id, b_id)] = value_db

    @staticmethod
    def _link_key(a_id: str, b_id: str) -> tuple[str, str]:
        return (a_id, b_id) if a_id <= b_id else (b_id, a_id)

    def pathloss_db(self, a: NodePosition, b: NodePosition) -> float:
        """Log-distance loss plus frozen per-link shadowing; symmetric in (a, b)."""
        ch = self.channel
        d = math.hypot(a.x - b.x, a.y - b.y)
        d = max(d, ch.min_distance_m)
        loss = ch.reference_loss_db + 10.0 * ch.pathloss_exponent * math.log10(d)
        loss += self._shadow.get(self._link_key(a.node_id, b.node_id), 0.0)
        if a.operator_id != b.operator_id:
            loss += ch.wall_loss_db
        return loss

    def link_gain(self, a: NodePosition, b: NodePosition) -> float:
        """Linear power gain (cached); rx_mw = tx_mw * gain."""
        key = (a.node_id, b.node_id)
        g = self._gain.get(key)
        if g is None:
            g = 10.0 ** (-self.pathloss_db(a, b) / 10.0)
            self._gain[key] = g
            self._gain[(b.node_id, a.node_id)] = g
        return g

    def rx_power_mw(self, tx: NodePosition, rx: NodePosition, tx_power_dbm: float) -> float:
        return dbm_to_mw(tx_power_dbm) * self.link_gain(tx, rx)

    def rx_power_dbm(self, tx: NodePosition, rx: NodePosition, tx_power_dbm: float) -> float:
        return tx_power_dbm - self.pathloss_db(tx, rx)

    # -- sensing -----------------------------------------------------------

    def add_sensor(self, pos: NodePosition, threshold_dbm: float,
                   on_edge: Callable[[int, bool], None],
                   preamble_dbm: Optional[float] = None,
                   carrier_id: int = 0) -> Sensor:
        sensor = Sensor(pos, threshold_dbm, on_edge, preamble_dbm, carrier_id,
                        noise_mw=self.noise_mw)
        self._sensors.append(sensor)
        return sensor

    # -- transmissions -----------------------------------------------------

    def begin(self, tx: ActiveTransmission, now: int) -> ActiveTransmission:
        """Register a transmission starting now; its end is already known."""
        if tx.start != now:
            raise ValueError("transmission start must equal current time")
        tx.serial = self._serial
        self._serial += 1
        if tx.rx_node is not None:
            tx.rx_signal_mw = self.rx_power_mw(tx.tx_node, tx.rx_node, tx.tx_power_dbm)
        tx_id = tx.tx_node.node_id
        for w in self._active.values():
            if w.carrier_id != tx.carrier_id or w.end <= now:
                continue
            if w.rx_node is not None and w.tx_node.node_id != tx_id:
                if w.rx_node.node_id == tx_id:
                    # Receiver turned transmitter mid-reception: half duplex.
                    w.corrupted = True
                else:
                    w.interference.append(
                        (now, self.rx_power_mw(tx.tx_node, w.rx_node, tx.tx_power_dbm)))
            if tx.rx_node is not None:
                if w.tx_node.node_id == tx.rx_node.node_id:
                    tx.corrupted = True
                elif w.tx_node.node_id != tx_id:
                    tx.interference.append(
                        (now, self.rx_power_mw(w.tx_node, tx.rx_node, w.tx_power_dbm)))
        self._active[tx.serial] = tx
        self.tx_log.append(tx)
        is_wifi = tx.technology is Technology.WIFI
        for s in self._sensors:
            if s.carrier_id == tx.carrier_id and s.pos.node_id != tx_id:
                s.apply(now, self.rx_power_mw(tx.tx_node, s.pos, tx.tx_power_dbm), is_wifi)
        return tx

    def end(self, tx: ActiveTransmission, now: int) -> None:
        if tx.end != now:
            raise ValueError("transmission end must equal current time")
        del self._active[tx.serial]
        tx_id = tx.tx_node.node_id
        for w in self._active.values():
            if (w.carrier_id == tx.carrier_id and w.rx_node is not None
                    and w.start < now and w.tx_node.node_id != tx_id
                    and w.rx_node.node_id != tx_id):
                w.interference.append(
                    (now, -self.rx_power_mw(tx.tx_node, w.rx_node, tx.tx_power_dbm)))
        is_wifi = tx.technology is Technology.WIFI
        for s in self._sensors:
            if s.carrier_id == tx.carrier_id and s.pos.node_id != tx_id:
                s.apply(now, -self.rx_power_mw(tx.tx_node, s.pos, tx.tx_power_dbm), is_wifi)

    # -- queries -----------------------------------------------------------

    def sensed_energy_dbm(self, listener: NodePosition, t: int,
                          carrier_id: int = 0) -> float:
        """Noise floor plus every transmission active at t, summed in mW."""
        total = self.noise_mw
        lid = listener.node_id
        for tx in self.tx_log:
            if (tx.carrier_id == carrier_id and tx.start <= t < tx.end
                    and tx.tx_node.node_id != lid):
                total += self.rx_power_mw(tx.tx_node, listener, tx.tx_power_dbm)
        return mw_to_dbm(total)

    def sinr_db(self, rx: NodePosition, wanted: ActiveTransmission, t: int) -> float:
        """Instantaneous SINR of `wanted` at `rx` at time t."""
        if not (wanted.start <= t < wanted.end):
            raise ValueError("wanted transmission is not active at t")
        signal = self.rx_power_mw(wanted.tx_node, rx, wanted.tx_power_dbm)
        interf = 0.0
        for tx in self.tx_log:
            if (tx is not wanted and tx.carrier_id == wanted.carrier_id
                    and tx.start <= t < tx.end
                    and tx.tx_node.node_id != wanted.tx_node.node_id):
                interf += self.rx_power_mw(tx.tx_node, rx, tx.tx_power_dbm)
        return mw_to_dbm(signal / (self.noise_mw + interf))

    def estimate_sinr_db(self, tx_pos: NodePosition, rx_pos: NodePosition,
                         tx_power_dbm: float, now: int, carrier_id: int = 0) -> float:
        """Link-adaptation estimate: SINR against transmissions begun strictly
        before `now`, so two emissions starting at the same instant do not see
        each other (symmetric collisions regardless of dispatch order)."""
        signal = self.rx_power_mw(tx_pos, rx_pos, tx_power_dbm)
        interf = 0.0
        for w in self._active.values():
            if (w.carrier_id == carrier_id and w.start < now and w.end > now
                    and w.tx_node.node_id != tx_pos.node_id):
                interf += self.rx_power_mw(w.tx_node, rx_pos, w.tx_power_dbm)
        return mw_to_dbm(signal / (self.noise_mw + interf))

    def min_sinr_db(self, wanted: ActiveTransmission) -> float:
        """Minimum SINR over the whole [start, end) interval.

        The interference record is a time-ordered list of power deltas at the
        receiver; the worst SINR occurs at the largest running interference sum.
        """
        if wanted.rx_node is None:
            raise ValueError("transmission has no receiver")
        if wanted.corrupted:
            return float("-inf")
        running = 0.0
        worst = 0.0
        for t, delta in wanted.interference:
            if t >= wanted.end:
                continue
            running += delta
            if running > worst:
                worst = running
        return mw_to_dbm(wanted.rx_signal_mw / (self.noise_mw + worst))

    def reception_outcome(self, wanted: ActiveTransmission) -> bool:
        """Decoded iff the minimum SINR over the duration met the threshold
        chosen at rate selection; deterministic given the trace."""
        if wanted.decode_sinr_min_db is None:
            raise ValueError("transmission carries no decodable payload")
        return self.min_sinr_db(wanted) >= wanted.decode_sinr_min_db

    def rate_bps(self, sinr_db: float, tech: Technology) -> float:
        return self.rates.rate_bps(sinr_db, tech, self.channel.bandwidth_mhz * 1e6)

    def decode_threshold_db(self, rate_bps: float, tech: Technology) -> float:
        implied = self.rates.sinr_for_rate_db(
            rate_bps, tech, self.channel.bandwidth_mhz * 1e6)
        return implied - self.rates.decode_margin_db

    # -- offline trace analysis ---------------------------------------------

    def energy_timeline_mw(self, listener: NodePosition, t0: int, t1: int,
                           carrier_id: int = 0,
                           exclude_tx_of: Optional[str] = None,
                           include_noise: bool = True):
        """Piecewise-constant received power at `listener` over [t0, t1].

        Returns (edges, levels_mw) with len(edges) == len(levels) + 1;
        levels[i] holds on [edges[i], edges[i+1]).  Built from the transmission
        log, so it can be evaluated after the run for RSSI sampling and for
        auditing sensing decisions.
        """
        base = self.noise_mw if include_noise else 0.0
        starts, ends, powers = [], [], []
        for tx in self.tx_log:
            if tx.carrier_id != carrier_id or tx.tx_node.node_id == listener.node_id:
                continue
            if exclude_tx_of is not None and tx.tx_node.node_id == exclude_tx_of:
                continue
            if tx.end <= t0 or tx.start >= t1:
                continue
            starts.append(max(tx.start, t0))
            ends.append(min(tx.end, t1))
            powers.append(self.rx_power_mw(tx.tx_node, listener, tx.tx_power_dbm))
        if not starts:
            return np.array([t0, t1], dtype=np.int64), np.array([base])
        times = np.concatenate([np.asarray(starts, dtype=np.int64),
                                np.asarray(ends, dtype=np.int64)])
        deltas = np.concatenate([np.asarray(powers), -np.asarray(powers)])
        order = np.argsort(times, kind="stable")
        times = times[order]
        deltas = deltas[order]
        # Collapse duplicate timestamps so each instant has one level.
        uniq, idx = np.unique(times, return_index=True)
        summed = np.add.reduceat(deltas, idx)
        cum = np.concatenate([[0.0], np.cumsum(summed)])
        inner = uniq[(uniq > t0) & (uniq < t1)]
        edges = np.concatenate([[t0], inner, [t1]]).astype(np.int64)
        counts = np.searchsorted(uniq, edges[:-1], side="right")
        levels = base + np.maximum(cum[counts], 0.0)
        return edges, levels

    def max_energy_dbm(self, listener: NodePosition, t0: int, t1: int,
                       carrier_id: int = 0,
                       exclude_tx_of: Optional[str] = None) -> float:
        """Largest instantaneous summed power over [t0, t1), in dBm."""
        _, levels = self.energy_timeline_mw(listener, t0, t1, carrier_id, exclude_tx_of)
        return mw_to_dbm(float(np.max(levels)))
