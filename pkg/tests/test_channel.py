import numpy as np
import pytest

from ulsense.channel import (
    GeniePowers,
    InterferenceMaskSpec,
    ScenarioConfig,
    TdlProfile,
    apply_tdl,
    burst_mask,
    combine_at_receiver,
    default_interferer_profile,
    generate_interference,
    tdl_frequency_response,
)
from ulsense.grid import ConfigError, N_SUBCARRIERS, N_SYMBOLS


def two_tap_profile(delta_s=300e-9, doppler=0.0):
    return TdlProfile(name="two-tap", delays_s=(0.0, delta_s),
                      powers_db=(0.0, 0.0), doppler_hz=doppler)


def count_runs(flat_mask):
    """Number of maximal runs of ones in a flattened mask."""
    padded = np.concatenate(([0], flat_mask.astype(np.int8), [0]))
    return int((np.diff(padded) == 1).sum())


class TestTdl:
    def test_flat_channel_is_identity(self):
        rng = np.random.default_rng(0)
        grid = rng.standard_normal((N_SYMBOLS, N_SUBCARRIERS)) \
            + 1j * rng.standard_normal((N_SYMBOLS, N_SUBCARRIERS))
        out = apply_tdl(grid, TdlProfile.flat(), seed=123)
        assert np.allclose(out, grid, atol=1e-12)

    def test_two_taps_frequency_selective(self):
        h = tdl_frequency_response(two_tap_profile(), seed=1)
        mags = np.abs(h[0])
        assert mags.max() - mags.min() > 0.5  # real fades across the band

    def test_mean_power_gain_monte_carlo(self):
        # Oracle: Monte-Carlo average of |H|^2 over many seeds.
        total = 0.0
        n_seeds = 1000
        for seed in range(n_seeds):
            h = tdl_frequency_response(two_tap_profile(), seed=seed,
                                       n_symbols=1, n_subcarriers=128)
            total += float(np.mean(np.abs(h) ** 2))
        assert total / n_seeds == pytest.approx(1.0, rel=0.02)

    def test_doppler_varies_over_symbols(self):
        h = tdl_frequency_response(two_tap_profile(doppler=200.0), seed=3)
        assert not np.allclose(h[0], h[13])
        h0 = tdl_frequency_response(two_tap_profile(doppler=0.0), seed=3)
        assert np.allclose(h0[0], h0[13])

    def test_profile_validation(self):
        with pytest.raises(ConfigError):
            TdlProfile(name="bad", delays_s=(1e-9, 0.0),
                       powers_db=(0.0, 0.0))
        with pytest.raises(ConfigError):
            TdlProfile(name="bad", delays_s=(-1e-9,), powers_db=(0.0,))

    def test_standard_profiles_normalized(self):
        for name in ("tdl-a", "tdl-b", "tdl-c"):
            profile = TdlProfile.standard(name, 300e-9, 100.0)
            assert np.sum(profile.amplitudes ** 2) == pytest.approx(1.0)


class TestBurstMask:
    def test_contiguity_and_count(self):
        rng = np.random.default_rng(42)
        for trial in range(50):
            spec = InterferenceMaskSpec(
                burst_count=int(rng.integers(1, 12)),
                total_active_fraction=float(rng.uniform(0.01, 0.9)),
                rng_seed=trial)
            mask = burst_mask(spec, rng_seed=trial)
            assert count_runs(mask.ravel()) == spec.burst_count
            target = round(spec.total_active_fraction * mask.size)
            assert mask.sum() == max(target, spec.burst_count)

    def test_zero_fraction_rejected(self):
        with pytest.raises(ConfigError):
            InterferenceMaskSpec(total_active_fraction=0.0)

    def test_infeasible_combo_rejected(self):
        spec = InterferenceMaskSpec(burst_count=3,
                                    total_active_fraction=1.0)
        with pytest.raises(ConfigError, match="separated bursts"):
            burst_mask(spec, rng_seed=0)

    def test_full_band_single_burst(self):
        spec = InterferenceMaskSpec(burst_count=1, total_active_fraction=1.0)
        mask = burst_mask(spec, rng_seed=0)
        assert mask.all()


class TestInterference:
    def test_unit_average_power(self):
        # Oracle: direct power sum over the returned grid.
        for n, seed in [(1, 0), (2, 1), (5, 2)]:
            spec = InterferenceMaskSpec(burst_count=4,
                                        total_active_fraction=0.3,
                                        rng_seed=seed)
            grid = generate_interference(n, spec,
                                         default_interferer_profile(), seed)
            assert np.mean(np.abs(grid) ** 2) == pytest.approx(1.0, abs=1e-3)

    def test_half_mask_rescale_is_sqrt2(self):
        # Flat grid, mask covering exactly half the REs: surviving REs
        # must be scaled by sqrt(2) to conserve slot-average power.
        flat = np.ones((4, 8), dtype=complex)
        mask = np.zeros((4, 8), dtype=bool)
        mask[:2] = True
        pre = np.mean(np.abs(flat) ** 2)
        masked = np.where(mask, flat, 0)
        post = np.mean(np.abs(masked) ** 2)
        scale = np.sqrt(pre / post)
        assert scale == pytest.approx(np.sqrt(2.0))
        rescaled = masked * scale
        assert np.mean(np.abs(rescaled) ** 2) == pytest.approx(pre)

    def test_determinism(self):
        spec = InterferenceMaskSpec(burst_count=3,
                                    total_active_fraction=0.25, rng_seed=9)
        profile = default_interferer_profile()
        g1 = generate_interference(2, spec, profile, seed=5)
        g2 = generate_interference(2, spec, profile, seed=5)
        assert np.array_equal(g1, g2)

    def test_needs_interferer(self):
        with pytest.raises(ConfigError):
            generate_interference(0, InterferenceMaskSpec(),
                                  default_interferer_profile(), 0)


class TestCombine:
    def unit_signal(self, seed=0):
        rng = np.random.default_rng(seed)
        sig = rng.standard_normal((N_SYMBOLS, N_SUBCARRIERS)) \
            + 1j * rng.standard_normal((N_SYMBOLS, N_SUBCARRIERS))
        return sig / np.sqrt(np.mean(np.abs(sig) ** 2))

    def test_sir_zero_matches_signal_power(self):
        sig = self.unit_signal(1)
        interf = self.unit_signal(2)
        _, powers = combine_at_receiver(sig, interf, snr_db=None,
                                        sir_db=0.0, seed=0)
        assert powers.interference == pytest.approx(powers.signal, rel=1e-9)

    def test_no_noise_no_interference_identity(self):
        sig = self.unit_signal(3)
        rx, powers = combine_at_receiver(sig, None, snr_db=None,
                                         sir_db=None, seed=0)
        assert np.array_equal(rx, sig)
        assert powers.noise == 0.0 and powers.interference == 0.0

    def test_measured_sir_within_half_db(self):
        # Oracle: power ratio of the genie components.
        sig = self.unit_signal(4)
        interf = self.unit_signal(5)
        for target in (-10.0, 0.0, 5.0, 10.0, 20.0):
            _, powers = combine_at_receiver(sig, interf, snr_db=10.0,
                                            sir_db=target, seed=7)
            assert abs(powers.sir_db() - target) < 0.5

    def test_noise_variance_tracks_snr(self):
        sig = self.unit_signal(6)
        for snr in (0.0, 10.0, 20.0):
            _, powers = combine_at_receiver(sig, None, snr_db=snr,
                                            sir_db=None, seed=11)
            assert powers.noise == pytest.approx(10 ** (-snr / 10), rel=0.05)

    def test_sinr_clamps(self):
        assert GeniePowers(1.0, 0.0, 0.0).sinr_db() == 60.0
        assert GeniePowers(0.0, 0.0, 1.0).sinr_db() == -140.0


class TestScenarioConfig:
    def test_interferer_bounds(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(n_interferers=6)
        ScenarioConfig(n_interferers=5)  # fine
