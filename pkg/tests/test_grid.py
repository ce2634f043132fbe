import numpy as np
import pytest

from ulsense.channel import ScenarioConfig
from ulsense.grid import (
    ConfigError,
    DATA_SYMBOLS,
    DMRS_SYMBOL,
    N_SUBCARRIERS,
    N_SYMBOLS,
    TrafficProfile,
    dmrs_sequence,
    generate_tx_slot,
    mcs_entry,
    qam_demodulate,
    qam_modulate,
)


def scenario(mcs_index=2, table=0, n_prbs=273, seed=0):
    return ScenarioConfig(mcs=mcs_entry(mcs_index, table), n_prbs=n_prbs,
                          seed=seed)


class TestQam:
    def test_qpsk_gray_corner(self):
        sym = qam_modulate([0, 0], 2)
        assert sym[0] == pytest.approx((1 + 1j) / np.sqrt(2))

    def test_16qam_mean_power(self):
        # Oracle: direct power average over 1024 random symbols.
        rng = np.random.default_rng(3)
        bits = rng.integers(0, 2, size=4096)
        syms = qam_modulate(bits, 4)
        assert syms.size == 1024
        assert abs(np.mean(np.abs(syms) ** 2) - 1.0) < 0.05

    @pytest.mark.parametrize("order", [2, 4, 6, 8])
    def test_constellation_unit_power_exact(self, order):
        # All 2^order points exactly once: E[|x|^2] must be 1.
        patterns = np.array(
            [[(p >> (order - 1 - b)) & 1 for b in range(order)]
             for p in range(2 ** order)])
        syms = qam_modulate(patterns.ravel(), order)
        assert np.mean(np.abs(syms) ** 2) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("order", [2, 4, 6, 8])
    def test_hard_decision_roundtrip(self, order):
        rng = np.random.default_rng(order)
        bits = rng.integers(0, 2, size=order * 600)
        assert np.array_equal(qam_demodulate(qam_modulate(bits, order), order),
                              bits.astype(np.uint8))

    def test_unsupported_order(self):
        with pytest.raises(ConfigError, match="unsupported"):
            qam_modulate([0, 0, 0], 3)

    def test_length_mismatch(self):
        with pytest.raises(ConfigError, match="divisible"):
            qam_modulate([0, 0, 0], 4)


class TestMcs:
    def test_orders_match_tables(self):
        assert mcs_entry(0, 0).modulation_order == 2
        assert mcs_entry(10, 0).modulation_order == 4
        assert mcs_entry(17, 0).modulation_order == 6
        assert mcs_entry(27, 1).modulation_order == 8

    def test_out_of_range(self):
        with pytest.raises(ConfigError):
            mcs_entry(28, 0)
        with pytest.raises(ConfigError):
            mcs_entry(0, 2)
        with pytest.raises(ConfigError):
            mcs_entry(-1, 0)


class TestTxSlot:
    def test_full_band_population(self):
        # Oracle: allocation arithmetic 273 * 12 * (14 - 1) data REs.
        grid, _, _ = generate_tx_slot(scenario(seed=7),
                                      TrafficProfile.high_traffic(), 7)
        populated = np.abs(grid) > 0
        assert populated.sum() == N_SUBCARRIERS * N_SYMBOLS
        assert populated[DMRS_SYMBOL].all()
        data_count = sum(populated[s].sum() for s in DATA_SYMBOLS)
        assert data_count == 273 * 12 * (N_SYMBOLS - 1)

    def test_partial_allocation_count(self):
        n_prbs = 52
        grid, _, _ = generate_tx_slot(scenario(n_prbs=n_prbs),
                                      TrafficProfile.no_traffic(), 3)
        assert (np.abs(grid) > 0).sum() == n_prbs * 12 * N_SYMBOLS
        assert not np.abs(grid[:, n_prbs * 12:]).any()

    @pytest.mark.parametrize("mcs_index", [2, 10, 17])
    def test_data_power_exactly_unit(self, mcs_index):
        grid, _, _ = generate_tx_slot(scenario(mcs_index=mcs_index),
                                      TrafficProfile.high_traffic(), 11)
        data = grid[DATA_SYMBOLS, :]
        assert np.mean(np.abs(data) ** 2) == pytest.approx(1.0, abs=1e-6)

    def test_empty_allocation_rejected(self):
        with pytest.raises(ConfigError, match="empty allocation"):
            generate_tx_slot(scenario(n_prbs=0),
                             TrafficProfile.no_traffic(), 0)

    def test_determinism(self):
        args = (scenario(seed=5), TrafficProfile.high_traffic(), 99)
        g1, tb1, b1 = generate_tx_slot(*args)
        g2, tb2, b2 = generate_tx_slot(*args)
        assert np.array_equal(g1, g2)
        assert tb1 == tb2
        assert np.array_equal(b1, b2)

    def test_dmrs_is_known_sequence(self):
        grid, _, _ = generate_tx_slot(scenario(),
                                      TrafficProfile.no_traffic(), 1)
        assert np.array_equal(grid[DMRS_SYMBOL], dmrs_sequence())

    def test_grid_finite(self):
        grid, _, _ = generate_tx_slot(scenario(),
                                      TrafficProfile.high_traffic(), 2)
        assert np.isfinite(grid).all()


class TestTrafficProfile:
    def test_no_traffic_range(self):
        rng = np.random.default_rng(0)
        profile = TrafficProfile.no_traffic()
        sizes = [profile.sample(rng) for _ in range(2000)]
        assert min(sizes) >= 100 and max(sizes) <= 1056
        assert 140 < np.median(sizes) < 250  # centered near 185

    def test_high_traffic_exceeds_single_cb(self):
        rng = np.random.default_rng(0)
        profile = TrafficProfile.high_traffic()
        assert all(profile.sample(rng) > 1056 for _ in range(500))
