"""Release-13 LAA downlink channel access.

Pure pieces first: the category-4 LBT state machine (variable contention
window between the class minimum and maximum, 9 us ECCA slots), the adaptive
energy-detection threshold, contention-window adaptation from HARQ-ACK
feedback, discovery-signal gating inside DMTC windows, partial-subframe burst
planning against the MCOT budget, the per-4-ms sensing-gap rule, and the two
multicarrier LBT options.  `LaaEnb` then drives those pieces on the event
kernel: it contends, transmits subframe-segmented bursts with an optional
reservation signal, collects per-segment feedback, and adapts its CWS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .contention import SlottedContender
from .medium import (ActiveTransmission, BurstKind, Medium, NodePosition,
                     Technology)
from .metrics import FileRecord
from .sim_core import MS, US, RngStream, Simulator
from .traffic import FileJob, TxBuffer, VoipPacket

SLOT_BOUNDARY_NS = 500_000        # LTE slot: half a subframe
SUBFRAME_NS = 1_000_000
SYMBOLS_PER_SUBFRAME = 14
ENDING_SYMBOLS = (3, 6, 9, 10, 11, 12, 14)
JAPAN_SEGMENT_NS = 4_000_000
JAPAN_GAP_US = 34


def symbols_ns(count: int) -> int:
    """Airtime of `count` OFDM symbols at 14 symbols per 1 ms subframe."""
    return count * SUBFRAME_NS // SYMBOLS_PER_SUBFRAME


# -- priority classes and thresholds ----------------------------------------


@dataclass
class PriorityClassParams:
    """Channel-access class: allowed CWS ladder, MCOT budgets, defer length."""

    class_id: int
    cws_set: tuple[int, ...]
    mcot_shared_us: int
    mcot_exclusive_us: int
    defer_slots: int

    def __post_init__(self):
        if self.class_id not in (1, 2, 3, 4):
            raise ValueError("class_id must be 1..4")
        if any(b <= a for a, b in zip(self.cws_set, self.cws_set[1:])):
            raise ValueError("cws_set must be strictly increasing")
        if self.mcot_shared_us > self.mcot_exclusive_us:
            raise ValueError("mcot_shared_us must not exceed mcot_exclusive_us")
        if self.class_id == 3 and tuple(self.cws_set) != (15, 31, 63):
            raise ValueError("class 3 CWS set is fixed to {15, 31, 63}")
        if self.class_id in (3, 4) and (self.mcot_shared_us, self.mcot_exclusive_us) != (8000, 10000):
            raise ValueError("classes 3 and 4 use 8 ms shared / 10 ms exclusive MCOT")

    @property
    def cws_min(self) -> int:
        return self.cws_set[0]

    @property
    def cws_max(self) -> int:
        return self.cws_set[-1]


DEFAULT_CLASS_PARAMS = {
    1: PriorityClassParams(1, (3, 7), 2000, 2000, 1),
    2: PriorityClassParams(2, (7, 15), 3000, 3000, 1),
    3: PriorityClassParams(3, (15, 31, 63), 8000, 10000, 3),
    4: PriorityClassParams(4, (15, 31, 63, 127, 255, 511, 1023), 8000, 10000, 7),
}


@dataclass
class EdThresholdParams:
    """Inputs to the adaptive maximum energy-detection threshold."""

    p_tx_dbm: float
    bw_mhz: float = 20.0
    p_h_dbm: float = 23.0
    shared_band: bool = True
    exclusive_threshold_dbm: Optional[float] = None

    def __post_init__(self):
        if self.bw_mhz <= 0:
            raise ValueError("bw_mhz must be positive")


def ed_threshold_dbm(p: EdThresholdParams) -> float:
    """Maximum ED threshold for category-4 LBT on a shared carrier.

    TH = max(floor, min(T_max, T_max - 10 + (P_H - P_TX))) with
    T_max = -75 dBm/MHz + 10 log10(BW); the -72 dBm floor is quoted for
    20 MHz and scales as 10 log10(BW / 20) at other bandwidths.  On a carrier
    guaranteed free of other technologies, a configured exclusive-band
    threshold (default T_max) applies instead.
    """
    t_max = -75.0 + 10.0 * math.log10(p.bw_mhz)
    if not p.shared_band:
        return (p.exclusive_threshold_dbm
                if p.exclusive_threshold_dbm is not None else t_max)
    floor = -72.0 + 10.0 * math.log10(p.bw_mhz / 20.0)
    return max(floor, min(t_max, t_max - 10.0 + (p.p_h_dbm - p.p_tx_dbm)))


def mcot_us(params: PriorityClassParams, exclusive_band: bool) -> int:
    """Maximum channel occupancy time for the class and band mode."""
    return params.mcot_exclusive_us if exclusive_band else params.mcot_shared_us


# -- HARQ feedback and CWS adaptation ----------------------------------------


class FeedbackValue(str, Enum):
    ACK = "ack"
    NACK = "nack"
    DTX = "dtx"


@dataclass
class HarqFeedback:
    burst_id: int
    subframe_index: int
    value: FeedbackValue
    scheduled_on_pcell: bool = False
    actually_scheduled: bool = True


class LbtState(str, Enum):
    IDLE = "idle"
    DEFERRING = "deferring"
    BACKOFF = "backoff"
    TX_ONGOING = "tx_ongoing"
    GAP_SENSING = "gap_sensing"


class LbtAction(str, Enum):
    KEEP_SENSING = "keep_sensing"
    DECREMENT = "decrement"
    FREEZE = "freeze"
    TRANSMIT_NOW = "transmit_now"


@dataclass
class LbtEngine:
    """Per-carrier category-4 LBT state."""

    params: PriorityClassParams
    ecca_slot_us: int = 9
    carrier_id: int = 0
    state: LbtState = LbtState.IDLE
    cws: int = -1
    backoff_counter: int = 0
    defer_remaining: int = 0
    mcot_spent_us: int = 0

    def __post_init__(self):
        if self.ecca_slot_us < 9:
            raise ValueError("ECCA slot must be at least 9 us")
        if self.cws < 0:
            self.cws = self.params.cws_min
        if self.cws not in self.params.cws_set:
            raise ValueError("cws must be a member of the class CWS set")


def begin_attempt(engine: LbtEngine, stream: RngStream) -> int:
    """Draw a fresh backoff counter in [0, cws] and enter the defer phase."""
    if engine.state is not LbtState.IDLE:
        raise ValueError("attempt can only begin from idle")
    engine.backoff_counter = stream.uniform_int(0, engine.cws)
    engine.defer_remaining = engine.params.defer_slots
    engine.state = LbtState.DEFERRING
    return engine.backoff_counter


def lbt_advance(engine: LbtEngine, channel_idle: bool) -> LbtAction:
    """Advance the state machine by one just-elapsed ECCA slot.

    Deferring requires every defer slot idle; any busy slot restarts the
    defer.  In backoff, an idle slot decrements the counter and a busy slot
    freezes it behind a fresh defer.  Reaching zero transmits immediately.
    """
    if engine.state is LbtState.DEFERRING:
        if channel_idle:
            engine.defer_remaining -= 1
            if engine.defer_remaining == 0:
                if engine.backoff_counter == 0:
                    engine.state = LbtState.TX_ONGOING
                    return LbtAction.TRANSMIT_NOW
                engine.state = LbtState.BACKOFF
        else:
            engine.defer_remaining = engine.params.defer_slots
        return LbtAction.KEEP_SENSING
    if engine.state is LbtState.BACKOFF:
        if channel_idle:
            engine.backoff_counter -= 1
            if engine.backoff_counter == 0:
                engine.state = LbtState.TX_ONGOING
                return LbtAction.TRANSMIT_NOW
            return LbtAction.DECREMENT
        engine.state = LbtState.DEFERRING
        engine.defer_remaining = engine.params.defer_slots
        return LbtAction.FREEZE
    raise ValueError(f"lbt_advance called in state {engine.state}")


def cws_update(feedbacks: list[HarqFeedback], engine: LbtEngine) -> int:
    """Adapt the CWS from the reference burst's first-subframe feedback.

    DTX counts as NACK, except entries for UEs that were not actually
    scheduled or whose scheduling went over the licensed PCell; those are
    excluded from the count entirely.  A NACK share of at least 80% steps the
    CWS to the next value of the class ladder (clamped at the maximum);
    anything less resets it to the minimum.  An empty effective set leaves
    the CWS unchanged.
    """
    effective = [f for f in feedbacks
                 if not (f.value is FeedbackValue.DTX
                         and (not f.actually_scheduled or f.scheduled_on_pcell))]
    if not effective:
        return engine.cws
    nacks = sum(1 for f in effective
                if f.value in (FeedbackValue.NACK, FeedbackValue.DTX))
    if 5 * nacks >= 4 * len(effective):  # nacks / total >= 0.8, in exact arithmetic
        ladder = engine.params.cws_set
        idx = ladder.index(engine.cws)
        engine.cws = ladder[min(idx + 1, len(ladder) - 1)]
    else:
        engine.cws = engine.params.cws_min
    return engine.cws


# -- discovery reference signal ----------------------------------------------


@dataclass
class DrsConfig:
    """DMTC timing: a 6 ms window recurring every 40/80/160 ms."""

    dmtc_period_ms: int = 80
    dmtc_offset_ms: int = 0
    dmtc_window_ms: int = 6
    drs_symbols: int = 12

    def __post_init__(self):
        if self.dmtc_period_ms not in (40, 80, 160):
            raise ValueError("DMTC period must be 40, 80 or 160 ms")
        if self.dmtc_window_ms != 6:
            raise ValueError("DMTC window is fixed at 6 ms")

    def occasion_index(self, t: int) -> int:
        return (t - self.dmtc_offset_ms * MS) // (self.dmtc_period_ms * MS)

    def in_window(self, t: int) -> bool:
        rel = (t - self.dmtc_offset_ms * MS) % (self.dmtc_period_ms * MS)
        return 0 <= rel < self.dmtc_window_ms * MS


def drs_permitted(now: int, cfg: DrsConfig, idle_since: int) -> bool:
    """A standalone DRS may start now iff `now` lies inside a DMTC window and
    the channel has been sensed idle for the immediately preceding 25 us."""
    return cfg.in_window(now) and now - idle_since >= 25 * US


# -- partial subframe planning -----------------------------------------------


@dataclass
class SubframeSegment:
    start_offset_ns: int  # relative to the LBT grant instant
    symbol_count: int

    @property
    def duration_ns(self) -> int:
        return symbols_ns(self.symbol_count)


@dataclass
class BurstPlan:
    reservation_ns: int
    segments: list[SubframeSegment]

    @property
    def airtime_ns(self) -> int:
        return self.reservation_ns + sum(s.duration_ns for s in self.segments)


def largest_ending_fitting(budget_ns: int, max_symbols: int = 14) -> Optional[int]:
    for k in reversed(ENDING_SYMBOLS):
        if k <= max_symbols and symbols_ns(k) <= budget_ns:
            return k
    return None


def smallest_ending_covering(bits: int, rate_bps: float, max_symbols: int) -> Optional[int]:
    """Shortest allowed ending whose airtime carries `bits` at `rate_bps`."""
    for k in ENDING_SYMBOLS:
        if k > max_symbols:
            break
        if rate_bps * symbols_ns(k) / 1e9 >= bits:
            return k
    return None


def structural_segments(first_room: int, budget_ns: int) -> list[int]:
    """Symbol counts for one contiguous run of subframe segments.

    `first_room` is the symbols left in the starting subframe (14 at a
    subframe boundary, 7 at the second slot boundary); interior segments are
    whole subframes and the final one is the largest allowed ending length
    fitting the residual budget.
    """
    if first_room not in (7, 14):
        raise ValueError("a segment run starts with 7 or 14 symbols of room")
    segs: list[int] = []
    if budget_ns < symbols_ns(3):
        return segs
    if symbols_ns(first_room) <= budget_ns:
        segs.append(first_room)
        remaining = budget_ns - symbols_ns(first_room)
        while remaining >= SUBFRAME_NS:
            segs.append(SYMBOLS_PER_SUBFRAME)
            remaining -= SUBFRAME_NS
        k = largest_ending_fitting(remaining)
        if k is not None:
            segs.append(k)
        if segs[-1] == 7:  # a lone second-slot start cannot end a burst
            segs[-1] = 6
    else:
        k = largest_ending_fitting(budget_ns, max_symbols=first_room)
        if k is not None:
            segs.append(k)
    return segs


def partial_subframe_plan(grant_time: int, mcot_budget_us: int) -> BurstPlan:
    """Plan a burst granted at an arbitrary instant within an MCOT budget.

    Data starts at the next slot boundary; the reservation-signal span from
    the grant to that boundary is reported separately and counts against the
    budget, so the whole on-air burst stays within the MCOT.
    """
    if mcot_budget_us <= 0:
        raise ValueError("mcot_budget_us must be positive")
    budget_ns = mcot_budget_us * US
    into_slot = grant_time % SLOT_BOUNDARY_NS
    reservation = (SLOT_BOUNDARY_NS - into_slot) % SLOT_BOUNDARY_NS
    data_budget = budget_ns - reservation
    first_room = 14 if (grant_time + reservation) % SUBFRAME_NS == 0 else 7
    segments = []
    if data_budget >= symbols_ns(3):
        offset = reservation
        for k in structural_segments(first_room, data_budget):
            segments.append(SubframeSegment(offset, k))
            offset += symbols_ns(k)
    if not segments:
        return BurstPlan(0, [])  # nothing to send: no reservation either
    return BurstPlan(reservation, segments)


def japan_gap_check(continuous_tx_us: int) -> int:
    """Required idle gap before continuing: 34 us whenever the continuous
    transmission time reaches a 4 ms multiple, otherwise zero."""
    if continuous_tx_us > 0 and continuous_tx_us % 4000 == 0:
        return JAPAN_GAP_US
    return 0


# -- multicarrier LBT ----------------------------------------------------------


def multicarrier_lbt(mode: str, carriers: list[LbtEngine], *,
                     designated_index: Optional[int] = None,
                     single_interval_idle: Optional[list[bool]] = None,
                     aligned_idle: Optional[list[bool]] = None) -> set[int]:
    """Carriers cleared to transmit under the two multicarrier options.

    Mode "A": the designated carrier must have completed full category-4 LBT;
    every other carrier is cleared iff it passed a single 25 us idle interval
    check at that instant.  Mode "B": each carrier runs its own category-4
    LBT and self-defers to a common alignment instant; carriers that have
    completed and whose final re-check slot was idle are cleared.
    """
    if not carriers:
        raise ValueError("at least one carrier required")

    def finished(e: LbtEngine) -> bool:
        return e.state is LbtState.TX_ONGOING and e.backoff_counter == 0

    if mode == "A":
        if designated_index is None or not 0 <= designated_index < len(carriers):
            raise ValueError("mode A requires a designated carrier")
        idle = single_interval_idle or [False] * len(carriers)
        if not finished(carriers[designated_index]):
            return set()
        cleared = {designated_index}
        cleared.update(i for i, e in enumerate(carriers)
                       if i != designated_index and idle[i])
        return cleared
    if mode == "B":
        idle = aligned_idle or [False] * len(carriers)
        return {i for i, e in enumerate(carriers) if finished(e) and idle[i]}
    raise ValueError(f"unknown multicarrier mode {mode!r}")


# -- event-driven eNB ---------------------------------------------------------


@dataclass
class LaaConfig:
    """Driver-level knobs for one LAA eNB."""

    priority_class: int = 3
    ecca_slot_us: int = 9
    defer_us: int = 16
    defer_slots: Optional[int] = None
    tx_power_dbm: float = 23.0
    shared_band: bool = True
    reservation_signal: bool = True
    japan_mode: bool = False
    cross_carrier_scheduling: bool = False
    feedback_delay_subframes: int = 4
    drs_enabled: bool = True
    dmtc_period_ms: int = 80
    dmtc_offset_ms: int = 0


@dataclass
class SegmentWork:
    """One planned data segment: destination, rate, and byte assignments."""

    index_in_burst: int
    symbols: int
    dest_id: str
    rate_bps: float
    decode_sinr_min_db: float
    assigned: list[tuple[object, int]]  # (queue item, bytes)
    start: int = 0

    @property
    def duration_ns(self) -> int:
        return symbols_ns(self.symbols)

    @property
    def bytes_assigned(self) -> int:
        return sum(n for _, n in self.assigned)


@dataclass
class BurstRecord:
    """Audit record of one channel occupancy, kept for trace checks."""

    burst_id: int
    grant: int
    mcot_budget_ns: int
    reservation_ns: int
    segments: list[tuple[int, int, int]] = field(default_factory=list)  # (start, dur, symbols)
    gaps: list[tuple[int, int]] = field(default_factory=list)
    aborted: bool = False
    completed: bool = False  # False when the run horizon cut the burst short
    first_sf_feedback: list[HarqFeedback] = field(default_factory=list)
    feedback_available_at: Optional[int] = None

    @property
    def airtime_ns(self) -> int:
        return self.reservation_ns + sum(d for _, d, _ in self.segments)


class LaaEnb:
    """An LAA eNB serving downlink traffic on one unlicensed carrier."""

    def __init__(self, sim: Simulator, medium: Medium, pos: NodePosition,
                 cfg: LaaConfig, ues: dict[str, NodePosition], recorder,
                 class_params: Optional[PriorityClassParams] = None):
        self.sim = sim
        self.medium = medium
        self.pos = pos
        self.cfg = cfg
        self.ues = ues
        self.recorder = recorder
        params = class_params or DEFAULT_CLASS_PARAMS[cfg.priority_class]
        if cfg.defer_slots is not None and cfg.defer_slots != params.defer_slots:
            params = PriorityClassParams(params.class_id, params.cws_set,
                                         params.mcot_shared_us,
                                         params.mcot_exclusive_us,
                                         cfg.defer_slots)
        self.engine = LbtEngine(params, ecca_slot_us=cfg.ecca_slot_us)
        self.mcot_ns = mcot_us(params, exclusive_band=not cfg.shared_band) * US
        self.ed_threshold = ed_threshold_dbm(EdThresholdParams(
            p_tx_dbm=cfg.tx_power_dbm,
            bw_mhz=medium.channel.bandwidth_mhz,
            shared_band=cfg.shared_band))
        self.buffer = TxBuffer()
        self.backoff_stream = sim.stream(f"laa.backoff.{pos.node_id}")
        self.sensor = medium.add_sensor(pos, self.ed_threshold, self._on_edge)
        head_ns = cfg.defer_us * US + params.defer_slots * cfg.ecca_slot_us * US
        self.contender = SlottedContender(sim, pos.node_id, head_ns,
                                          cfg.ecca_slot_us * US, self._on_grant)
        self.drs_cfg = DrsConfig(cfg.dmtc_period_ms, cfg.dmtc_offset_ms)
        self.burst_log: list[BurstRecord] = []
        self.drs_log: list[tuple[int, int]] = []  # (start, occasion index)
        self._burst_seq = 0
        self._last_applied_burst = -1
        self._own_tx = False
        self._gap_abort = False
        self._gap_timer = None
        self._pending_chapters: list[list[SegmentWork]] = []
        self._current_record: Optional[BurstRecord] = None
        self._drs_occasion_done = -1
        self._drs_timer = None
        if cfg.drs_enabled:
            first = cfg.dmtc_offset_ms * MS
            sim.schedule(first, pos.node_id, "dmtc_occasion", self._on_occasion)

    # -- queueing ---------------------------------------------------------

    def enqueue_file(self, job: FileJob) -> None:
        self.buffer.push_file(job, self.sim.now)
        self._maybe_start_access()

    def enqueue_voip(self, pkt: VoipPacket) -> None:
        self.buffer.push_voip(pkt, self.sim.now)
        self._maybe_start_access()

    def _maybe_start_access(self) -> None:
        if self.engine.state is LbtState.IDLE and len(self.buffer) > 0:
            self._start_access()

    def _start_access(self) -> None:
        self._apply_pending_feedback()
        begin_attempt(self.engine, self.backoff_stream)
        self.contender.start(self.engine.backoff_counter,
                             channel_idle=not self.sensor.busy)

    def _apply_pending_feedback(self) -> None:
        now = self.sim.now
        latest = None
        for rec in reversed(self.burst_log):
            if rec.burst_id <= self._last_applied_burst:
                break
            if rec.feedback_available_at is not None and rec.feedback_available_at <= now:
                latest = rec
                break
        if latest is not None:
            cws_update(latest.first_sf_feedback, self.engine)
            self._last_applied_burst = latest.burst_id

    # -- sensing edges ------------------------------------------------------

    def _on_edge(self, now: int, busy: bool) -> None:
        if self.engine.state is LbtState.GAP_SENSING:
            if busy:
                self._abort_gap(now)
            return
        if self._own_tx:
            return
        if busy:
            self.contender.notify_busy(now)
            if self._drs_timer is not None:
                self.sim.cancel(self._drs_timer)
                self._drs_timer = None
        else:
            self.contender.notify_idle(now)
            self._consider_drs(now)

    # -- burst construction -------------------------------------------------

    def _rate_for(self, dest_id: str, cache: dict) -> tuple[float, float]:
        got = cache.get(dest_id)
        if got is None:
            est = self.medium.estimate_sinr_db(
                self.pos, self.ues[dest_id], self.cfg.tx_power_dbm, self.sim.now)
            rate = self.medium.rate_bps(est, Technology.LAA)
            thr = self.medium.decode_threshold_db(rate, Technology.LAA)
            got = cache[dest_id] = (rate, thr)
        return got

    @staticmethod
    def _capacity_bytes(rate_bps: float, duration_ns: int) -> int:
        return int(rate_bps * duration_ns / 1e9) // 8

    def _assign_segments(self, symbol_counts: list[int], pending: list,
                         rate_cache: dict, start_index: int) -> list[SegmentWork]:
        """Fill structural segments from the queue in service order.

        Each segment carries bytes for a single destination (the owner of the
        first unassigned item); the final segment shrinks to the smallest
        allowed ending length that still covers its payload.
        """
        out: list[SegmentWork] = []
        for k in symbol_counts:
            item = next((it for it in pending
                         if it.remaining - it.in_flight > 0), None)
            if item is None:
                break
            dest = item.dest_id
            rate, thr = self._rate_for(dest, rate_cache)
            cap = self._capacity_bytes(rate, symbols_ns(k))
            if cap <= 0:
                break
            assigned = []
            got = 0
            for it in pending:
                if it.dest_id != dest:
                    continue
                avail = it.remaining - it.in_flight
                take = min(avail, cap - got)
                if take <= 0:
                    continue
                it.in_flight += take
                got += take
                assigned.append((it, take))
                if got == cap:
                    break
            out.append(SegmentWork(start_index + len(out), k, dest, rate, thr, assigned))
        while out:
            last = out[-1]
            k = smallest_ending_covering(last.bytes_assigned * 8,
                                         last.rate_bps, last.symbols)
            if k is None:
                # The payload saturates a length that is not an allowed ending
                # (a lone second-slot start): shrink to the largest allowed
                # ending and push the excess bytes back to the queue.
                k = largest_ending_fitting(symbols_ns(last.symbols),
                                           max_symbols=last.symbols)
                self._trim_assignment(last,
                                      self._capacity_bytes(last.rate_bps, symbols_ns(k)))
                if not last.assigned:
                    out.pop()
                    continue
            last.symbols = k
            break
        return out

    @staticmethod
    def _trim_assignment(work: "SegmentWork", new_cap_bytes: int) -> None:
        excess = work.bytes_assigned - new_cap_bytes
        while excess > 0 and work.assigned:
            item, take = work.assigned[-1]
            cut = min(take, excess)
            item.in_flight -= cut
            excess -= cut
            if cut == take:
                work.assigned.pop()
            else:
                work.assigned[-1] = (item, take - cut)

    def _on_grant(self) -> None:
        grant = self.sim.now
        self.engine.state = LbtState.TX_ONGOING
        pending = list(self.buffer.voip) + list(self.buffer.files)
        rate_cache: dict = {}
        budget = self.mcot_ns
        chapter_cap = JAPAN_SEGMENT_NS if self.cfg.japan_mode else budget

        into_slot = grant % SLOT_BOUNDARY_NS
        reservation = (SLOT_BOUNDARY_NS - into_slot) % SLOT_BOUNDARY_NS
        first_room = 14 if (grant + reservation) % SUBFRAME_NS == 0 else 7

        chapters: list[list[SegmentWork]] = []
        seg_index = 0
        budget_left = budget
        first = True
        while budget_left >= symbols_ns(3):
            cap = min(budget_left, chapter_cap)
            res = reservation if first else 0
            room = first_room if first else 14
            data_budget = cap - res
            if data_budget < symbols_ns(3):
                break
            works = self._assign_segments(structural_segments(room, data_budget),
                                          pending, rate_cache, seg_index)
            if not works:
                break
            chapters.append(works)
            seg_index += len(works)
            budget_left -= res + sum(w.duration_ns for w in works)
            first = False
            if not self.cfg.japan_mode:
                break

        if not chapters:
            # Nothing servable right now (e.g. rates collapsed); retry shortly.
            self.engine.state = LbtState.IDLE
            self.sim.schedule_in(SUBFRAME_NS, self.pos.node_id, "access_retry",
                                 self._maybe_start_access)
            return

        record = BurstRecord(self._burst_seq, grant, budget, reservation)
        self._burst_seq += 1
        self.burst_log.append(record)
        self._current_record = record
        self._pending_chapters = chapters
        self._own_tx = True

        if reservation > 0 and self.cfg.reservation_signal:
            tx = ActiveTransmission(self.pos, None, grant, grant + reservation,
                                    self.cfg.tx_power_dbm, self.engine.carrier_id,
                                    BurstKind.RESERVATION, Technology.LAA)
            self.medium.begin(tx, grant)
            self.sim.schedule(grant + reservation, self.pos.node_id, "reservation_end",
                              lambda t=tx: self._after_reservation(t))
        else:
            self.sim.schedule(grant + reservation, self.pos.node_id, "chapter_start",
                              self._start_chapter)

    def _after_reservation(self, tx: ActiveTransmission) -> None:
        self.medium.end(tx, self.sim.now)
        self._start_chapter()

    def _start_chapter(self) -> None:
        works = self._pending_chapters.pop(0)
        self._begin_segment(works, 0)

    def _begin_segment(self, works: list[SegmentWork], i: int) -> None:
        now = self.sim.now
        work = works[i]
        work.start = now
        dest = self.ues[work.dest_id]
        tx = ActiveTransmission(self.pos, dest, now, now + work.duration_ns,
                                self.cfg.tx_power_dbm, self.engine.carrier_id,
                                BurstKind.DATA, Technology.LAA,
                                bits=work.bytes_assigned * 8,
                                rate_bps=work.rate_bps,
                                decode_sinr_min_db=work.decode_sinr_min_db)
        self.medium.begin(tx, now)
        for item, _ in work.assigned:
            if isinstance(item, FileJob) and item.first_service is None:
                item.first_service = now
        if self.cfg.drs_enabled and self.drs_cfg.in_window(now):
            self._drs_occasion_done = max(self._drs_occasion_done,
                                          self.drs_cfg.occasion_index(now))
        self.sim.schedule(tx.end, self.pos.node_id, "segment_end",
                          lambda: self._end_segment(works, i, tx))

    def _end_segment(self, works: list[SegmentWork], i: int,
                     tx: ActiveTransmission) -> None:
        now = self.sim.now
        self.medium.end(tx, now)
        work = works[i]
        self._current_record.segments.append((work.start, work.duration_ns,
                                              work.symbols))
        self.engine.mcot_spent_us += work.duration_ns // US
        self._emit_feedback(work, tx)
        if i + 1 < len(works):
            self._begin_segment(works, i + 1)
        elif self._pending_chapters:
            self._enter_gap(now)
        else:
            self._finish_burst()

    def _emit_feedback(self, work: SegmentWork, tx: ActiveTransmission) -> None:
        min_sinr = self.medium.min_sinr_db(tx)
        if min_sinr >= tx.decode_sinr_min_db:
            value = FeedbackValue.ACK
        elif (not self.cfg.cross_carrier_scheduling
              and min_sinr < self.medium.rates.dtx_sinr_db):
            value = FeedbackValue.DTX
        else:
            value = FeedbackValue.NACK
        fb = HarqFeedback(self._current_record.burst_id, work.index_in_burst,
                          value, scheduled_on_pcell=self.cfg.cross_carrier_scheduling)
        record = self._current_record
        segment_end = self.sim.now
        delay = self.cfg.feedback_delay_subframes * SUBFRAME_NS
        if work.index_in_burst == 0:
            record.first_sf_feedback.append(fb)
            record.feedback_available_at = segment_end + delay
        self.sim.schedule(segment_end + delay, self.pos.node_id, "harq_feedback",
                          lambda: self._settle_segment(work, value, segment_end))

    def _settle_segment(self, work: SegmentWork, value: FeedbackValue,
                        segment_end: int) -> None:
        now = self.sim.now
        delivered = value is FeedbackValue.ACK
        for item, take in work.assigned:
            item.in_flight -= take
            if not delivered:
                continue
            item.remaining -= take
            self.buffer.bytes_delivered += take
            if item.remaining == 0:
                self.buffer.remove(item, now)
                if isinstance(item, FileJob):
                    item.completed_at = segment_end
                    self.recorder.file_completed(item.operator_id, FileRecord(
                        bytes=item.bytes_total, arrival=item.arrival,
                        first_service=item.first_service, completion=segment_end))
                else:
                    item.delivered_at = segment_end
                    self.recorder.voip_delivery(item.operator_id, item.user_id,
                                                segment_end - item.arrival)

    def _enter_gap(self, now: int) -> None:
        self.engine.state = LbtState.GAP_SENSING
        self._own_tx = False
        self._gap_abort = False
        record = self._current_record
        gap_end = now + JAPAN_GAP_US * US
        record.gaps.append((now, gap_end))
        if self.sensor.busy:
            self._abort_gap(now)
            return
        self._gap_timer = self.sim.schedule(gap_end, self.pos.node_id, "gap_end",
                                            self._after_gap)

    def _abort_gap(self, now: int) -> None:
        if self._gap_timer is not None:
            self.sim.cancel(self._gap_timer)
            self._gap_timer = None
        for works in self._pending_chapters:
            for w in works:
                for item, take in w.assigned:
                    item.in_flight -= take
        self._pending_chapters = []
        self._current_record.aborted = True
        self._finish_burst()

    def _after_gap(self) -> None:
        self._gap_timer = None
        self.engine.state = LbtState.TX_ONGOING
        self._own_tx = True
        self._start_chapter()

    def _finish_burst(self) -> None:
        self._own_tx = False
        self._current_record.completed = True
        self._current_record = None
        self.engine.state = LbtState.IDLE
        self._consider_drs(self.sim.now)
        self._maybe_start_access()

    # -- discovery signal ---------------------------------------------------

    def _on_occasion(self) -> None:
        now = self.sim.now
        self._consider_drs(now)
        self.sim.schedule(now + self.drs_cfg.dmtc_period_ms * MS, self.pos.node_id,
                          "dmtc_occasion", self._on_occasion)

    def _consider_drs(self, now: int) -> None:
        if not self.cfg.drs_enabled or not self.drs_cfg.in_window(now):
            return
        if self.drs_cfg.occasion_index(now) <= self._drs_occasion_done:
            return
        if self._own_tx or self.engine.state in (LbtState.TX_ONGOING,
                                                 LbtState.GAP_SENSING):
            return
        if self._drs_timer is not None:
            return
        if self.sensor.busy or self.contender.due_now(now):
            return
        ready_at = max(now, self.sensor.idle_since + 25 * US)
        window_end = ((self.drs_cfg.occasion_index(now) * self.drs_cfg.dmtc_period_ms
                       + self.drs_cfg.dmtc_offset_ms + self.drs_cfg.dmtc_window_ms) * MS)
        if ready_at >= window_end:
            return
        if ready_at == now:
            self._send_drs()
        else:
            self._drs_timer = self.sim.schedule(ready_at, self.pos.node_id,
                                                "drs_check", self._drs_fire)

    def _drs_fire(self) -> None:
        self._drs_timer = None
        now = self.sim.now
        if (self.sensor.busy or self._own_tx or self.contender.due_now(now)
                or not drs_permitted(now, self.drs_cfg, self.sensor.idle_since)
                or self.drs_cfg.occasion_index(now) <= self._drs_occasion_done):
            return
        self._send_drs()

    def _send_drs(self) -> None:
        now = self.sim.now
        occasion = self.drs_cfg.occasion_index(now)
        self._drs_occasion_done = occasion
        self.drs_log.append((now, occasion))
        duration = symbols_ns(self.drs_cfg.drs_symbols)
        tx = ActiveTransmission(self.pos, None, now, now + duration,
                                self.cfg.tx_power_dbm, self.engine.carrier_id,
                                BurstKind.DRS, Technology.LAA)
        self.medium.begin(tx, now)
        self._own_tx = True
        self.contender.notify_busy(now)
        self.sim.schedule(tx.end, self.pos.node_id, "drs_end",
                          lambda: self._end_drs(tx))

    def _end_drs(self, tx: ActiveTransmission) -> None:
        now = self.sim.now
        self.medium.end(tx, now)
        self._own_tx = False
        if not self.sensor.busy:
            self.contender.notify_idle(now)

    # -- end of run ---------------------------------------------------------

    def finalize(self, horizon: int) -> None:
        self.buffer.finalize(horizon)
        for pkt in self.buffer.voip:
            self.recorder.voip_delivery(pkt.operator_id, pkt.user_id, None)
