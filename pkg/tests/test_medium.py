"""Channel model contracts, with linear-domain oracles computed in-test."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coexist_sim.medium import (ActiveTransmission, BurstKind, ChannelModel,
                                Medium, NodeKind, NodePosition, RateModel,
                                Technology, dbm_to_mw, mw_to_dbm)

# -- independent oracle helpers (straight linear-domain arithmetic) ------------


def oracle_sum_dbm(*dbm_values):
    return 10 * math.log10(sum(10 ** (v / 10) for v in dbm_values))


def oracle_noise_dbm(bw_mhz, nf_db):
    return -174 + 10 * math.log10(bw_mhz * 1e6) + nf_db


def oracle_sinr_db(wanted_dbm, interferer_dbm_list, noise_dbm):
    denom = 10 ** (noise_dbm / 10) + sum(10 ** (v / 10) for v in interferer_dbm_list)
    return 10 * math.log10(10 ** (wanted_dbm / 10) / denom)


def oracle_shannon_bps(sinr_db, bw_hz, eta):
    return bw_hz * eta * math.log2(1 + 10 ** (sinr_db / 10))


# Expected values frozen from the oracles above.
NOISE_20MHZ_NF9 = oracle_noise_dbm(20, 9)                      # -91.9897 dBm
SINR_M60_M70_M92 = oracle_sinr_db(-60, [-70], -92)             # 9.9727 dB
SHANNON_20DB = oracle_shannon_bps(20.0, 20e6, 0.75)            # 99.873 Mbps


def quiet_channel(**kw):
    defaults = dict(shadowing_sigma_db=0.0)
    defaults.update(kw)
    return ChannelModel(**defaults)


def node(node_id, x, y, op=1, kind=NodeKind.WIFI_AP):
    return NodePosition(node_id, op, kind, x, y)


def make_medium(**kw):
    return Medium(quiet_channel(**kw), RateModel())


class TestPathloss:
    def test_reference_distance_gives_reference_loss(self):
        med = make_medium()
        a, b = node("a", 0, 0), node("b", 1, 0)
        assert med.pathloss_db(a, b) == pytest.approx(46.4, abs=1e-12)

    def test_ten_meters_exponent_three(self):
        med = make_medium()
        a, b = node("a", 0, 0), node("b", 10, 0)
        assert med.pathloss_db(a, b) == pytest.approx(46.4 + 30.0, abs=1e-9)

    def test_symmetry_with_shadowing(self):
        med = Medium(ChannelModel(shadowing_sigma_db=6.0), RateModel())
        med.set_shadowing_db("a", "b", 4.3)
        a, b = node("a", 3, 7), node("b", 40, 21)
        assert med.pathloss_db(a, b) == med.pathloss_db(b, a)

    def test_distance_clamp(self):
        med = make_medium()
        a, b = node("a", 0, 0), node("b", 0.01, 0)
        clamped = node("c", 0.5, 0)
        assert med.pathloss_db(a, b) == med.pathloss_db(a, clamped)


class TestSensedEnergy:
    def test_empty_channel_is_thermal_noise(self):
        med = make_medium()
        listener = node("l", 0, 0)
        assert med.sensed_energy_dbm(listener, 0) == pytest.approx(
            NOISE_20MHZ_NF9, abs=1e-9)
        assert NOISE_20MHZ_NF9 == pytest.approx(-91.99, abs=0.01)

    def test_single_transmitter_dominates_noise(self):
        # 23 dBm through an 80 dB link: noise adds only ~1e-3 dB.
        med = make_medium(pathloss_exponent=3.0, reference_loss_db=46.4)
        # place rx so pathloss is exactly 80 dB: 46.4 + 30 log10(d) = 80
        d = 10 ** ((80 - 46.4) / 30)
        tx_n, rx_n = node("tx", 0, 0), node("rx", d, 0)
        med.add_node(tx_n), med.add_node(rx_n)
        tx = ActiveTransmission(tx_n, None, 0, 1000, 23.0, 0,
                                BurstKind.DATA, Technology.WIFI)
        med.begin(tx, 0)
        expected = oracle_sum_dbm(-57.0, NOISE_20MHZ_NF9)
        assert med.sensed_energy_dbm(rx_n, 500) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(-57.0, abs=0.01)

    def test_two_equal_arrivals_add_three_db(self):
        med = make_medium(noise_figure_db=0.0)
        med.noise_mw = 0.0  # isolate the additivity property
        listener = node("l", 0, 0)
        d = 10 ** ((83 - 46.4) / 30)  # -60 dBm from 23 dBm
        for i, ang in enumerate((0.0, math.pi / 2)):
            t = node(f"t{i}", d * math.cos(ang), d * math.sin(ang))
            med.add_node(t)
            med.begin(ActiveTransmission(t, None, 0, 1000, 23.0, 0,
                                         BurstKind.DATA, Technology.WIFI), 0)
        assert med.sensed_energy_dbm(listener, 10) == pytest.approx(
            -60 + 10 * math.log10(2), abs=1e-9)

    def test_monotone_in_active_set(self):
        med = make_medium()
        listener = node("l", 17, 3)
        before = med.sensed_energy_dbm(listener, 10)
        t = node("t", 60, 40)
        med.add_node(t)
        med.begin(ActiveTransmission(t, None, 0, 1000, 23.0, 0,
                                     BurstKind.DATA, Technology.WIFI), 0)
        assert med.sensed_energy_dbm(listener, 10) >= before


class TestSinr:
    def _setup(self):
        med = make_medium()
        tx_n = med.add_node(node("tx", 0, 0))
        rx_n = med.add_node(node("rx", 5, 0))
        return med, tx_n, rx_n

    def test_no_interferer_is_snr(self):
        med, tx_n, rx_n = self._setup()
        tx = ActiveTransmission(tx_n, rx_n, 0, 1000, 23.0, 0,
                                BurstKind.DATA, Technology.WIFI)
        med.begin(tx, 0)
        snr = (23.0 - med.pathloss_db(tx_n, rx_n)) - med.channel.noise_floor_dbm
        assert med.sinr_db(rx_n, tx, 100) == pytest.approx(snr, abs=1e-6)

    def test_equal_power_interferer_near_zero_db(self):
        med, tx_n, rx_n = self._setup()
        other = med.add_node(node("i", 10, 0))  # same distance from rx
        tx = ActiveTransmission(tx_n, rx_n, 0, 1000, 23.0, 0,
                                BurstKind.DATA, Technology.WIFI)
        med.begin(tx, 0)
        med.begin(ActiveTransmission(other, None, 0, 1000, 23.0, 0,
                                     BurstKind.DATA, Technology.WIFI), 0)
        assert med.sinr_db(rx_n, tx, 100) == pytest.approx(0.0, abs=0.05)

    def test_hand_computed_case(self):
        # wanted -60 dBm, interferer -70 dBm, noise -92 dBm
        med = make_medium()
        med.noise_mw = dbm_to_mw(-92.0)
        rx_n = med.add_node(node("rx", 0, 0))
        d60 = 10 ** ((23 + 60 - 46.4) / 30)
        d70 = 10 ** ((23 + 70 - 46.4) / 30)
        tx_n = med.add_node(node("tx", d60, 0))
        i_n = med.add_node(node("i", -d70, 0))
        tx = ActiveTransmission(tx_n, rx_n, 0, 1000, 23.0, 0,
                                BurstKind.DATA, Technology.WIFI)
        med.begin(tx, 0)
        med.begin(ActiveTransmission(i_n, None, 0, 1000, 23.0, 0,
                                     BurstKind.DATA, Technology.WIFI), 0)
        assert med.sinr_db(rx_n, tx, 100) == pytest.approx(SINR_M60_M70_M92, abs=1e-6)
        assert SINR_M60_M70_M92 == pytest.approx(9.97, abs=0.01)

    def test_inactive_wanted_rejected(self):
        med, tx_n, rx_n = self._setup()
        tx = ActiveTransmission(tx_n, rx_n, 0, 1000, 23.0, 0,
                                BurstKind.DATA, Technology.WIFI)
        med.begin(tx, 0)
        with pytest.raises(ValueError):
            med.sinr_db(rx_n, tx, 1000)

    def test_sensing_matches_signal_plus_noise_for_single_tx(self):
        med, tx_n, rx_n = self._setup()
        tx = ActiveTransmission(tx_n, rx_n, 0, 1000, 23.0, 0,
                                BurstKind.DATA, Technology.WIFI)
        med.begin(tx, 0)
        wanted = med.rx_power_dbm(tx_n, rx_n, 23.0)
        expected = oracle_sum_dbm(wanted, med.channel.noise_floor_dbm)
        assert abs(med.sensed_energy_dbm(rx_n, 100) - expected) < 0.1


class TestReception:
    def _run_overlap(self, overlap_fraction):
        """Interferer of equal received power covering the tail of the frame."""
        med = make_medium()
        tx_n = med.add_node(node("tx", 0, 0))
        rx_n = med.add_node(node("rx", 5, 0))
        i_n = med.add_node(node("i", 10, 0))
        sinr0 = med.estimate_sinr_db(tx_n, rx_n, 23.0, 0)
        rate = med.rate_bps(sinr0, Technology.WIFI)
        tx = ActiveTransmission(tx_n, rx_n, 0, 1_000_000, 23.0, 0,
                                BurstKind.DATA, Technology.WIFI, rate_bps=rate,
                                decode_sinr_min_db=med.decode_threshold_db(
                                    rate, Technology.WIFI))
        med.begin(tx, 0)
        if overlap_fraction > 0:
            start = int(1_000_000 * (1 - overlap_fraction))
            med.begin(ActiveTransmission(i_n, None, start, 2_000_000, 23.0, 0,
                                         BurstKind.DATA, Technology.WIFI), start)
        return med, tx

    def test_clean_frame_decodes(self):
        med, tx = self._run_overlap(0.0)
        assert med.reception_outcome(tx) is True

    def test_equal_power_collision_fails(self):
        med, tx = self._run_overlap(1.0)
        assert med.reception_outcome(tx) is False

    def test_interferer_on_last_tenth_still_fails(self):
        # min-SINR over the duration governs, not the average.
        med, tx = self._run_overlap(0.1)
        assert med.min_sinr_db(tx) == pytest.approx(0.0, abs=0.05)
        assert med.reception_outcome(tx) is False


class TestRateMap:
    def test_zero_at_minus_infinity(self):
        med = make_medium()
        assert med.rate_bps(float("-inf"), Technology.LAA) == 0.0
        assert med.rate_bps(float("-inf"), Technology.WIFI) == 0.0

    def test_laa_at_least_wifi_at_equal_sinr(self):
        med = make_medium()
        for sinr in (-10, -3, 0, 5, 10, 20, 30, 50):
            assert med.rate_bps(sinr, Technology.LAA) >= med.rate_bps(
                sinr, Technology.WIFI)

    def test_shannon_point_at_20db(self):
        med = make_medium()
        assert med.rate_bps(20.0, Technology.LAA) == pytest.approx(
            SHANNON_20DB, rel=1e-12)
        assert SHANNON_20DB == pytest.approx(100.0e6, rel=0.01)

    def test_cap_applies(self):
        med = make_medium()
        assert med.rate_bps(60.0, Technology.LAA) == med.rates.cap_laa_bps
        assert med.rate_bps(60.0, Technology.WIFI) == med.rates.cap_wifi_bps

    @settings(max_examples=80, deadline=None)
    @given(st.floats(min_value=-40, max_value=60),
           st.floats(min_value=0, max_value=20))
    def test_nondecreasing_in_sinr(self, sinr, step):
        med = make_medium()
        for tech in (Technology.LAA, Technology.WIFI):
            assert med.rate_bps(sinr + step, tech) >= med.rate_bps(sinr, tech)

    def test_rate_inverse_consistency(self):
        rm = RateModel()
        for rate in (10e6, 50e6, 120e6):
            sinr = rm.sinr_for_rate_db(rate, Technology.WIFI, 20e6)
            assert rm.rate_bps(sinr, Technology.WIFI, 20e6) == pytest.approx(
                rate, rel=1e-9)


class TestValidation:
    def test_bandwidth_must_be_positive(self):
        with pytest.raises(ValueError):
            ChannelModel(bandwidth_mhz=0)

    def test_negative_loss_rejected(self):
        with pytest.raises(ValueError):
            ChannelModel(wall_loss_db=-1)

    def test_transmission_interval(self):
        with pytest.raises(ValueError):
            ActiveTransmission(node("a", 0, 0), None, 10, 10, 23.0, 0,
                               BurstKind.DATA, Technology.WIFI)

    def test_mw_dbm_roundtrip(self):
        assert mw_to_dbm(dbm_to_mw(-62.0)) == pytest.approx(-62.0, abs=1e-12)
        assert mw_to_dbm(0.0) == float("-inf")
