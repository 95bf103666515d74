"""DCF unit tests plus small end-to-end frame-exchange scenarios."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coexist_sim.harness import RunRecorder
from coexist_sim.medium import (ChannelModel, Medium, NodeKind, NodePosition,
                                RateModel)
from coexist_sim.sim_core import SEC, US, Simulator
from coexist_sim.traffic import FileJob, VoipPacket
from coexist_sim.wifi_mac import (DcfAction, DcfEngine, DcfParams, DcfState,
                                  WifiDevice, cw_after, dcf_advance,
                                  start_attempt)


class TestCwAfter:
    def test_failure_doubles(self):
        assert cw_after("failure", 15, DcfParams()) == 31

    def test_failure_clamps_at_max(self):
        assert cw_after("failure", 1023, DcfParams()) == 1023

    def test_success_resets(self):
        assert cw_after("success", 255, DcfParams()) == 15

    def test_invalid_cw_rejected(self):
        with pytest.raises(ValueError):
            cw_after("failure", 16, DcfParams())

    def test_domain_closed_under_doubling(self):
        cw = 15
        seen = {cw}
        for _ in range(10):
            cw = cw_after("failure", cw, DcfParams())
            seen.add(cw)
        assert seen <= {15, 31, 63, 127, 255, 511, 1023}


class TestDcfAdvance:
    def test_zero_counter_transmits_after_difs(self):
        e = DcfEngine(DcfParams())
        start_attempt(e, 0)
        assert dcf_advance(e, True) is DcfAction.WAIT
        assert dcf_advance(e, True) is DcfAction.TRANSMIT_NOW
        assert e.state is DcfState.TX

    def test_busy_during_difs_restarts_counter_untouched(self):
        e = DcfEngine(DcfParams())
        start_attempt(e, 4)
        dcf_advance(e, True)
        assert dcf_advance(e, False) is DcfAction.WAIT
        assert e.difs_remaining == e.params.difs_slots
        assert e.backoff_counter == 4

    def test_freeze_resumes_at_same_count(self):
        e = DcfEngine(DcfParams())
        start_attempt(e, 4)
        for _ in range(e.params.difs_slots):
            dcf_advance(e, True)
        assert dcf_advance(e, True) is DcfAction.DECREMENT  # 4 -> 3
        assert dcf_advance(e, False) is DcfAction.FREEZE
        assert e.backoff_counter == 3
        for _ in range(e.params.difs_slots):
            dcf_advance(e, True)
        for expected in (2, 1):
            assert dcf_advance(e, True) is DcfAction.DECREMENT
            assert e.backoff_counter == expected
        assert dcf_advance(e, True) is DcfAction.TRANSMIT_NOW

    def test_advance_during_tx_rejected(self):
        e = DcfEngine(DcfParams())
        e.state = DcfState.TX
        with pytest.raises(ValueError):
            dcf_advance(e, True)


def reference_dcf_run(slots, counter, difs_slots):
    """Straight-line DCF interpretation over scripted slot observations."""
    transmit_at = []
    in_difs = True
    difs_left = difs_slots
    for i, idle in enumerate(slots):
        if in_difs:
            if idle:
                difs_left -= 1
                if difs_left == 0:
                    if counter == 0:
                        transmit_at.append(i)
                        break
                    in_difs = False
            else:
                difs_left = difs_slots
        else:
            if idle:
                counter -= 1
                if counter == 0:
                    transmit_at.append(i)
                    break
            else:
                in_difs = True
                difs_left = difs_slots
    return transmit_at


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=31),
       st.lists(st.booleans(), min_size=1, max_size=150))
def test_dcf_oracle_equivalence(counter, slots):
    e = DcfEngine(DcfParams(cw_max=1023))
    e.cw = 31
    start_attempt(e, counter)
    got = []
    for i, idle in enumerate(slots):
        if dcf_advance(e, idle) is DcfAction.TRANSMIT_NOW:
            got.append(i)
            break
    assert got == reference_dcf_run(list(slots), counter, e.params.difs_slots)


class FixedStream:
    """Deterministic stand-in for the backoff stream."""

    def __init__(self, values):
        self.values = list(values)

    def uniform_int(self, lo, hi):
        if self.values:
            v = self.values.pop(0)
        else:
            v = lo
        return min(max(v, lo), hi)


def two_device_setup(distance=10.0, sigma=0.0, tx_power=23.0):
    sim = Simulator(master_seed=9)
    medium = Medium(ChannelModel(shadowing_sigma_db=sigma), RateModel())
    rec = RunRecorder()
    devices = {}
    a_pos = medium.add_node(NodePosition("ap.a", 1, NodeKind.WIFI_AP, 0.0, 0.0))
    b_pos = medium.add_node(NodePosition("sta.b", 1, NodeKind.WIFI_STA, distance, 0.0))
    a = WifiDevice(sim, medium, a_pos, DcfParams(), tx_power, devices, rec)
    b = WifiDevice(sim, medium, b_pos, DcfParams(), tx_power, devices, rec)
    devices[a_pos.node_id] = a
    devices[b_pos.node_id] = b
    return sim, medium, rec, a, b


class TestFrameExchange:
    def test_clean_channel_acked_and_cw_reset(self):
        sim, medium, rec, ap, sta = two_device_setup()
        ap.engine.cw = 63  # pretend earlier failures
        ap.backoff_stream = FixedStream([3])
        job = FileJob("f0", 1, "ap.a", "sta.b", 20_000, 0)
        ap.enqueue_file(job)
        sim.run_until(SEC)
        assert job.remaining == 0
        assert job.completed_at is not None
        assert ap.engine.cw == 15
        assert len(rec.files_completed[1]) == 1
        rec_file = rec.files_completed[1][0]
        assert rec_file.bytes == 20_000

    def test_simultaneous_zero_counters_collide_and_double(self):
        sim, medium, rec, a, b = two_device_setup(distance=30.0)
        a.backoff_stream = FixedStream([0, 3])
        b.backoff_stream = FixedStream([0, 9])
        job_a = FileJob("fa", 1, "ap.a", "sta.b", 1000, 0)
        job_b = FileJob("fb", 1, "sta.b", "ap.a", 1000, 0)
        a.enqueue_file(job_a)
        b.enqueue_file(job_b)
        # Run just past the first exchange: both drew 0, both transmitted at
        # the DIFS boundary, both frames lost, both CWs doubled.
        sim.run_until(300_000)
        assert a.tx_starts[0] == b.tx_starts[0] == 34_000
        assert a.engine.cw == 31
        assert b.engine.cw == 31
        # With diverging follow-up draws both eventually deliver.
        sim.run_until(10_000_000)
        assert job_a.remaining == 0
        assert job_b.remaining == 0

    def test_retry_limit_drops_and_resets(self):
        sim, medium, rec, ap, sta = two_device_setup()

        class DeafMedium:  # force every data reception to fail
            def __getattr__(self, name):
                return getattr(medium, name)

            def reception_outcome(self, tx):
                return False

        ap.medium = DeafMedium()
        ap.backoff_stream = FixedStream([0])
        job = FileJob("f0", 1, "ap.a", "sta.b", 1000, 0)
        ap.enqueue_file(job)
        sim.run_until(SEC)
        assert job.dropped is True
        assert rec.files_dropped[1] == 1
        assert ap.engine.cw == 15  # reset after the drop
        assert len(ap.buffer) == 0

    def test_voip_delivery_records_delay(self):
        sim, medium, rec, ap, sta = two_device_setup()
        pkt = VoipPacket("v0", 1, "sta.b", "ap.a", "sta.b", 100, 5_000)
        sim.schedule(5_000, "ap.a", "voip", lambda: ap.enqueue_voip(pkt))
        sim.run_until(SEC)
        delays = rec.voip_delays[1]["sta.b"]
        assert len(delays) == 1
        assert delays[0] is not None and delays[0] > 0


def test_slot_alignment_of_transmission_starts():
    """Backoff counting restarts cleanly after a foreign burst: the PPDU
    starts exactly DIFS + k*slot after the busy->idle transition."""
    from coexist_sim.medium import ActiveTransmission, BurstKind, Technology

    sim, medium, rec, ap, sta = two_device_setup()
    ap.backoff_stream = FixedStream([7])
    jam_pos = medium.add_node(NodePosition("jam", 2, NodeKind.WIFI_AP, 1.0, 1.0))
    jam = ActiveTransmission(jam_pos, None, 0, 300_000, 23.0, 0,
                             BurstKind.DATA, Technology.WIFI)
    sim.schedule(0, "jam", "on", lambda: medium.begin(jam, 0))
    sim.schedule(300_000, "jam", "off", lambda: medium.end(jam, 300_000))
    job = FileJob("f0", 1, "ap.a", "sta.b", 1000, 0)
    sim.schedule(0, "ap.a", "arrival", lambda: ap.enqueue_file(job))
    sim.run_until(SEC)
    assert len(ap.tx_starts) == 1
    offset = ap.tx_starts[0] - 300_000
    assert offset == 34_000 + 7 * 9_000


def test_collision_probability_drops_with_larger_cw_min():
    """Directional saturation property: raising cw_min reduces collisions."""

    def run(cw_min, seed):
        sim = Simulator(master_seed=seed)
        medium = Medium(ChannelModel(shadowing_sigma_db=0.0), RateModel())
        rec = RunRecorder()
        devices = {}
        params = DcfParams(cw_min=cw_min)
        positions = [
            medium.add_node(NodePosition("n0", 1, NodeKind.WIFI_AP, 0.0, 0.0)),
            medium.add_node(NodePosition("n1", 1, NodeKind.WIFI_AP, 8.0, 0.0)),
        ]
        devs = []
        for i, pos in enumerate(positions):
            dev = WifiDevice(sim, medium, pos, params, 23.0, devices, rec)
            devices[pos.node_id] = dev
            devs.append(dev)
        # saturate both nodes toward each other
        for i, dev in enumerate(devs):
            dest = positions[1 - i].node_id
            for k in range(400):
                dev.enqueue_file(FileJob(f"f{i}.{k}", 1, dev.pos.node_id,
                                         dest, 4_000, 0))
        sim.run_until(SEC)
        attempts = sum(len(d.tx_starts) for d in devs)
        overlapping = 0
        txs = sorted((t, d.pos.node_id) for d in devs for t in d.tx_starts)
        data = [tx for tx in medium.tx_log if tx.rx_node is not None
                and tx.bits > 0]
        for i, tx in enumerate(data):
            for other in data[i + 1:]:
                if other.start >= tx.end:
                    break
                if other.tx_node.node_id != tx.tx_node.node_id:
                    overlapping += 1
        return overlapping / max(attempts, 1)

    low = sum(run(15, s) for s in (1, 2, 3)) / 3
    high = sum(run(255, s) for s in (1, 2, 3)) / 3
    assert high < low
