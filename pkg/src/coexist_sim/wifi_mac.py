"""Simplified IEEE 802.11 DCF for the coexisting Wi-Fi nodes.

CSMA/CA with binary exponential backoff over energy-based CCA only: no
RTS/CTS, no NAV, no aggregation, a single best-effort access category.  The
ACK exchange is protected by SIFS < DIFS rather than virtual carrier sense.
`WifiDevice` serves both APs and STAs; a STA without uplink traffic never
contends and only answers with ACKs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .contention import SlottedContender
from .medium import (ActiveTransmission, BurstKind, Medium, NodePosition,
                     Technology)
from .metrics import FileRecord
from .sim_core import US, Simulator
from .traffic import FileJob, TxBuffer, VoipPacket

VALID_CW = tuple(2 ** k - 1 for k in range(4, 11))  # 15 .. 1023


@dataclass
class DcfParams:
    slot_us: int = 9
    sifs_us: int = 16
    difs_us: int = 34
    cw_min: int = 15
    cw_max: int = 1023
    retry_limit: int = 7
    ack_duration_us: int = 44
    preamble_us: int = 40
    max_ppdu_us: int = 4000
    cca_ed_dbm: float = -62.0
    preamble_cca_dbm: float = -82.0
    preamble_sensing: bool = False
    # Abstract observation count standing in for DIFS in the slot-driven
    # engine; the event driver uses the exact difs_us instead.
    difs_slots: int = 2

    def __post_init__(self):
        for name in ("cw_min", "cw_max"):
            value = getattr(self, name)
            if value & (value + 1) != 0:
                raise ValueError(f"{name} must be of the form 2^k - 1")
        if self.cw_min > self.cw_max:
            raise ValueError("cw_min must not exceed cw_max")
        if self.slot_us < 9:
            raise ValueError("slot must be at least 9 us")


class DcfState(str, Enum):
    IDLE = "idle"
    DIFS_WAIT = "difs_wait"
    BACKOFF = "backoff"
    TX = "tx"
    AWAIT_ACK = "await_ack"


class DcfAction(str, Enum):
    WAIT = "wait"
    DECREMENT = "decrement"
    FREEZE = "freeze"
    TRANSMIT_NOW = "transmit_now"


@dataclass
class DcfEngine:
    params: DcfParams
    state: DcfState = DcfState.IDLE
    cw: int = -1
    backoff_counter: int = 0
    difs_remaining: int = 0
    retry_count: int = 0

    def __post_init__(self):
        if self.cw < 0:
            self.cw = self.params.cw_min


def cw_after(event: str, cw: int, params: DcfParams) -> int:
    """Exponential growth on failure, reset to the minimum on success."""
    if cw not in VALID_CW:
        raise ValueError(f"cw {cw} outside the valid set")
    if event == "failure":
        return min(2 * (cw + 1) - 1, params.cw_max)
    if event == "success":
        return params.cw_min
    raise ValueError(f"unknown event {event!r}")


def start_attempt(engine: DcfEngine, counter: int) -> None:
    if not 0 <= counter <= engine.cw:
        raise ValueError("counter outside [0, cw]")
    engine.backoff_counter = counter
    engine.difs_remaining = engine.params.difs_slots
    engine.state = DcfState.DIFS_WAIT


def dcf_advance(engine: DcfEngine, channel_idle: bool) -> DcfAction:
    """Advance by one just-elapsed slot observation.

    A busy observation during DIFS restarts DIFS with the counter untouched;
    after an idle DIFS the counter decrements once per idle slot, freezes on a
    busy slot (re-arming DIFS), and transmits when it reaches zero.
    """
    if engine.state is DcfState.DIFS_WAIT:
        if channel_idle:
            engine.difs_remaining -= 1
            if engine.difs_remaining == 0:
                if engine.backoff_counter == 0:
                    engine.state = DcfState.TX
                    return DcfAction.TRANSMIT_NOW
                engine.state = DcfState.BACKOFF
        else:
            engine.difs_remaining = engine.params.difs_slots
        return DcfAction.WAIT
    if engine.state is DcfState.BACKOFF:
        if channel_idle:
            engine.backoff_counter -= 1
            if engine.backoff_counter == 0:
                engine.state = DcfState.TX
                return DcfAction.TRANSMIT_NOW
            return DcfAction.DECREMENT
        engine.state = DcfState.DIFS_WAIT
        engine.difs_remaining = engine.params.difs_slots
        return DcfAction.FREEZE
    raise ValueError(f"dcf_advance called in state {engine.state}")


class AckPending:
    """Handle the data sender polls once the ACK window has elapsed."""

    __slots__ = ("tx",)

    def __init__(self):
        self.tx: Optional[ActiveTransmission] = None


class WifiDevice:
    """One AP or STA running DCF over energy-based CCA."""

    def __init__(self, sim: Simulator, medium: Medium, pos: NodePosition,
                 params: DcfParams, tx_power_dbm: float,
                 peers: dict[str, "WifiDevice"], recorder):
        self.sim = sim
        self.medium = medium
        self.pos = pos
        self.params = params
        self.tx_power_dbm = tx_power_dbm
        self.peers = peers
        self.recorder = recorder
        self.engine = DcfEngine(params)
        self.buffer = TxBuffer()
        self.backoff_stream = sim.stream(f"wifi.backoff.{pos.node_id}")
        self.sensor = medium.add_sensor(
            pos, params.cca_ed_dbm, self._on_edge,
            preamble_dbm=params.preamble_cca_dbm if params.preamble_sensing else None)
        self.contender = SlottedContender(sim, pos.node_id, params.difs_us * US,
                                          params.slot_us * US, self._on_transmit)
        self._own_tx = False
        self._contender_paused = False
        self.tx_starts: list[int] = []  # data PPDU grant instants, for audits

    # -- queueing -----------------------------------------------------------

    def enqueue_file(self, job: FileJob) -> None:
        self.buffer.push_file(job, self.sim.now)
        self._maybe_start_access()

    def enqueue_voip(self, pkt: VoipPacket) -> None:
        self.buffer.push_voip(pkt, self.sim.now)
        self._maybe_start_access()

    def _maybe_start_access(self) -> None:
        if self.engine.state is DcfState.IDLE and len(self.buffer) > 0:
            self._start_access()

    def _start_access(self) -> None:
        counter = self.backoff_stream.uniform_int(0, self.engine.cw)
        start_attempt(self.engine, counter)
        self.contender.start(counter, channel_idle=not self.sensor.busy)

    # -- sensing edges --------------------------------------------------------

    def _on_edge(self, now: int, busy: bool) -> None:
        if self._own_tx:
            return
        if busy:
            self.contender.notify_busy(now)
        else:
            self.contender.notify_idle(now)

    # -- data exchange --------------------------------------------------------

    def _on_transmit(self) -> None:
        now = self.sim.now
        self.engine.state = DcfState.TX
        item = self.buffer.head()
        est = self.medium.estimate_sinr_db(
            self.pos, self.medium.nodes[item.dest_id], self.tx_power_dbm, now)
        rate = self.medium.rate_bps(est, Technology.WIFI)
        payload_cap = int(rate * (self.params.max_ppdu_us - self.params.preamble_us)
                          * US / 1e9) // 8
        if payload_cap <= 0:
            # Link unusable right now; back off for a subframe and retry.
            self.engine.state = DcfState.IDLE
            self.sim.schedule_in(1_000_000, self.pos.node_id, "access_retry",
                                 self._maybe_start_access)
            return
        take = min(item.remaining - item.in_flight, payload_cap)
        item.in_flight += take
        airtime = self.params.preamble_us * US + round(take * 8 * 1e9 / rate)
        dest = self.medium.nodes[item.dest_id]
        tx = ActiveTransmission(self.pos, dest, now, now + airtime,
                                self.tx_power_dbm, 0, BurstKind.DATA,
                                Technology.WIFI, bits=take * 8, rate_bps=rate,
                                decode_sinr_min_db=self.medium.decode_threshold_db(
                                    rate, Technology.WIFI))
        self.medium.begin(tx, now)
        self.tx_starts.append(now)
        self._own_tx = True
        if isinstance(item, FileJob) and item.first_service is None:
            item.first_service = now
        self.sim.schedule(tx.end, self.pos.node_id, "ppdu_end",
                          lambda: self._on_data_end(item, take, tx))

    def _on_data_end(self, item, take: int, tx: ActiveTransmission) -> None:
        now = self.sim.now
        self.medium.end(tx, now)
        self._own_tx = False
        self.engine.state = DcfState.AWAIT_ACK
        pending = AckPending()
        if self.medium.reception_outcome(tx):
            peer = self.peers.get(item.dest_id)
            if peer is not None:
                peer.send_ack(self.pos, pending)
        check_at = now + (self.params.sifs_us + self.params.ack_duration_us) * US
        self.sim.schedule(check_at, self.pos.node_id, "ack_check",
                          lambda: self._on_exchange_done(item, take, tx, pending))

    def send_ack(self, dest: NodePosition, pending: AckPending) -> None:
        """Answer a decoded frame with an ACK after SIFS, without CCA."""
        at = self.sim.now + self.params.sifs_us * US
        self.sim.schedule(at, self.pos.node_id, "ack_start",
                          lambda: self._begin_ack(dest, pending))

    def _begin_ack(self, dest: NodePosition, pending: AckPending) -> None:
        if self._own_tx:
            return  # half duplex: a transmission of our own got in first
        now = self.sim.now
        duration = self.params.ack_duration_us * US
        tx = ActiveTransmission(self.pos, dest, now, now + duration,
                                self.tx_power_dbm, 0, BurstKind.ACK,
                                Technology.WIFI,
                                decode_sinr_min_db=self.medium.rates.control_sinr_db)
        self.medium.begin(tx, now)
        pending.tx = tx
        self._own_tx = True
        if self.contender.active:
            self.contender.notify_busy(now)
            self._contender_paused = True
        self.sim.schedule(tx.end, self.pos.node_id, "ack_end",
                          lambda: self._end_ack(tx))

    def _end_ack(self, tx: ActiveTransmission) -> None:
        now = self.sim.now
        self.medium.end(tx, now)
        self._own_tx = False
        if self._contender_paused:
            self._contender_paused = False
            if not self.sensor.busy:
                self.contender.notify_idle(now)

    def _on_exchange_done(self, item, take: int, tx: ActiveTransmission,
                          pending: AckPending) -> None:
        now = self.sim.now
        acked = pending.tx is not None and self.medium.reception_outcome(pending.tx)
        item.in_flight -= take
        if acked:
            item.remaining -= take
            self.buffer.bytes_delivered += take
            self.engine.cw = cw_after("success", self.engine.cw, self.params)
            self.engine.retry_count = 0
            if item.remaining == 0:
                self._complete_item(item, tx.end)
        else:
            self.engine.retry_count += 1
            if self.engine.retry_count > self.params.retry_limit:
                self._drop_item(item)
                self.engine.cw = cw_after("success", self.engine.cw, self.params)
                self.engine.retry_count = 0
            else:
                self.engine.cw = cw_after("failure", self.engine.cw, self.params)
        self.engine.state = DcfState.IDLE
        self._maybe_start_access()

    def _complete_item(self, item, data_end: int) -> None:
        self.buffer.remove(item, self.sim.now)
        if isinstance(item, FileJob):
            item.completed_at = data_end
            self.recorder.file_completed(item.operator_id, FileRecord(
                bytes=item.bytes_total, arrival=item.arrival,
                first_service=item.first_service, completion=data_end))
        else:
            item.delivered_at = data_end
            self.recorder.voip_delivery(item.operator_id, item.user_id,
                                        data_end - item.arrival)

    def _drop_item(self, item) -> None:
        self.buffer.remove(item, self.sim.now)
        self.buffer.bytes_dropped += item.remaining
        if isinstance(item, FileJob):
            item.dropped = True
            self.recorder.file_dropped(item.operator_id)
        else:
            item.dropped = True
            self.recorder.voip_delivery(item.operator_id, item.user_id, None)

    # -- end of run -----------------------------------------------------------

    def finalize(self, horizon: int) -> None:
        self.buffer.finalize(horizon)
        for pkt in self.buffer.voip:
            self.recorder.voip_delivery(pkt.operator_id, pkt.user_id, None)
