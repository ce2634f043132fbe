"""Fading, interference, and noise applied to slot grids.

The tapped-delay-line channel is realized directly as a frequency
response on the resource grid: each tap contributes a complex exponential
across subcarriers (from its delay) and a per-symbol phase rotation (from
its Doppler shift). Interference is one or more independently faded
full-band grids, gated by burst masks of contiguous ones and rescaled so
masking preserves each interferer's slot-average power.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    ConfigError,
    McsEntry,
    N_SUBCARRIERS,
    N_SYMBOLS,
    SCS_HZ,
    SYMBOL_DURATION_S,
    mcs_entry,
    qam_modulate,
)

# Normalized tap tables from the public TDL channel model definitions
# (TR 38.901 table 7.7.2 family): (normalized delay, power dB).
_TDL_A = [
    (0.0000, -13.4), (0.3819, 0.0), (0.4025, -2.2), (0.5868, -4.0),
    (0.4610, -6.0), (0.5375, -8.2), (0.6708, -9.9), (0.5750, -10.5),
    (0.7618, -7.5), (1.5375, -15.9), (1.8978, -6.6), (2.2242, -16.7),
    (2.1718, -12.4), (2.4942, -15.2), (2.5119, -10.8), (3.0582, -11.3),
    (4.0810, -12.7), (4.4579, -16.2), (4.5695, -18.3), (4.7966, -18.9),
    (5.0066, -16.6), (5.3043, -19.9), (9.6586, -29.7),
]
_TDL_B = [
    (0.0000, 0.0), (0.1072, -2.2), (0.2155, -4.0), (0.2095, -3.2),
    (0.2870, -9.8), (0.2986, -1.2), (0.3752, -3.4), (0.5055, -5.2),
    (0.3681, -7.6), (0.3697, -3.0), (0.5700, -8.9), (0.5283, -9.0),
    (1.1021, -4.8), (1.2756, -5.7), (1.5474, -7.5), (1.7842, -1.9),
    (2.0169, -7.6), (2.8294, -12.2), (3.0219, -9.8), (3.6187, -11.4),
    (4.1067, -14.9), (4.2790, -9.2), (4.7834, -11.3),
]
_TDL_C = [
    (0.0000, -4.4), (0.2099, -1.2), (0.2219, -3.5), (0.2329, -5.2),
    (0.2176, -2.5), (0.6366, 0.0), (0.6448, -2.2), (0.6560, -3.9),
    (0.6584, -7.4), (0.7935, -7.1), (0.8213, -10.7), (0.9336, -11.1),
    (1.2285, -5.1), (1.3083, -6.8), (2.1704, -8.7), (2.7105, -13.2),
    (4.2589, -13.9), (4.6003, -13.9), (5.4902, -15.8), (5.6077, -17.1),
    (6.3065, -16.0), (6.6374, -15.7), (7.0427, -21.6), (8.6523, -22.8),
]
_TDL_TABLES = {"tdl-a": _TDL_A, "tdl-b": _TDL_B, "tdl-c": _TDL_C}


@dataclass(frozen=True)
class TdlProfile:
    """Tapped-delay-line profile: tap delays/powers plus max Doppler.

    Tap powers are normalized at construction so the channel's expected
    power gain is exactly 1 (0 dB); delays must be sorted, non-negative.
    """

    name: str
    delays_s: tuple
    powers_db: tuple
    doppler_hz: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.delays_s, dtype=float)
        if d.size == 0:
            raise ConfigError("TDL profile needs at least one tap")
        if (d < 0).any() or (np.diff(d) < 0).any():
            raise ConfigError("tap delays must be non-negative and sorted")
        if self.doppler_hz < 0:
            raise ConfigError("doppler must be non-negative")

    @property
    def amplitudes(self) -> np.ndarray:
        """Per-tap amplitudes, normalized so sum of powers is 1."""
        p = 10.0 ** (np.asarray(self.powers_db, dtype=float) / 10.0)
        return np.sqrt(p / p.sum())

    @classmethod
    def flat(cls) -> "TdlProfile":
        """Single zero-delay unit tap: this channel is the identity."""
        return cls(name="flat", delays_s=(0.0,), powers_db=(0.0,),
                   doppler_hz=0.0)

    @classmethod
    def standard(cls, name: str, delay_spread_s: float,
                 doppler_hz: float) -> "TdlProfile":
        table = _TDL_TABLES.get(name.lower())
        if table is None:
            raise ConfigError(f"unknown TDL profile {name!r}")
        order = np.argsort([d for d, _ in table])
        delays = tuple(table[i][0] * delay_spread_s for i in order)
        powers = tuple(table[i][1] for i in order)
        return cls(name=f"{name.lower()}-{delay_spread_s * 1e9:.0f}ns",
                   delays_s=delays, powers_db=powers, doppler_hz=doppler_hz)


def default_serving_profile() -> TdlProfile:
    return TdlProfile.standard("tdl-c", 100e-9, doppler_hz=10.0)


def default_interferer_profile() -> TdlProfile:
    # "High" delay spread / Doppler defaults for interfering uplinks.
    return TdlProfile.standard("tdl-a", 300e-9, doppler_hz=100.0)


@dataclass(frozen=True)
class InterferenceMaskSpec:
    """Burst-mask geometry: contiguous runs of ones in the RE plane."""

    burst_count: int = 6
    total_active_fraction: float = 0.2
    rng_seed: int = 0

    def __post_init__(self):
        if self.burst_count < 1:
            raise ConfigError("burst_count must be >= 1")
        if not 0.0 < self.total_active_fraction <= 1.0:
            raise ConfigError("total_active_fraction must be in (0, 1]")


@dataclass(frozen=True)
class ScenarioConfig:
    """One point of the synthetic sweep (SNR, SIR, MCS, channels, ...)."""

    snr_db: float | None = 20.0       # None disables noise
    sir_db: float | None = 0.0        # None disables interference scaling
    mcs: McsEntry = field(default_factory=lambda: mcs_entry(10, 0))
    delay_profile: TdlProfile = field(default_factory=default_serving_profile)
    interf_delay_profile: TdlProfile = field(
        default_factory=default_interferer_profile)
    n_interferers: int = 0
    mask: InterferenceMaskSpec = field(default_factory=InterferenceMaskSpec)
    numerology: int = 1               # metadata only (30 kHz SCS)
    carrier_ghz: float = 3.7          # metadata only
    seed: int = 0
    n_prbs: int = 273

    def __post_init__(self):
        if not 0 <= self.n_interferers <= 5:
            raise ConfigError("n_interferers must be within [0, 5]")


# ---------------------------------------------------------------------------
# TDL frequency response


def tdl_frequency_response(profile: TdlProfile, seed,
                           n_symbols: int = N_SYMBOLS,
                           n_subcarriers: int = N_SUBCARRIERS) -> np.ndarray:
    """Channel frequency response H over (symbol, subcarrier).

    Tap phases are uniform random except the first tap, which is the
    phase reference (zero) -- this makes the degenerate single-tap,
    zero-delay, zero-Doppler profile an exact identity. Doppler rotates
    each tap's phase across OFDM symbols with a random arrival angle.
    """
    rng = np.random.default_rng(seed)
    amps = profile.amplitudes
    n_taps = amps.size

    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_taps)
    phases[0] = 0.0
    doppler = profile.doppler_hz * np.cos(
        rng.uniform(0.0, 2.0 * np.pi, size=n_taps))

    t = np.arange(n_symbols) * SYMBOL_DURATION_S
    f = np.arange(n_subcarriers) * SCS_HZ
    delays = np.asarray(profile.delays_s)

    # H[l, k] = sum_i a_i exp(j(phi_i + 2 pi nu_i t_l)) exp(-2j pi f_k tau_i)
    time_term = (amps[:, None] * np.exp(1j * (
        phases[:, None] + 2.0 * np.pi * doppler[:, None] * t[None, :])))
    freq_term = np.exp(-2j * np.pi * delays[:, None] * f[None, :])
    return time_term.T @ freq_term


def apply_tdl(grid: np.ndarray, profile: TdlProfile, seed) -> np.ndarray:
    """Pass a slot grid through the TDL channel (pure transform)."""
    return grid * tdl_frequency_response(
        profile, seed, n_symbols=grid.shape[0], n_subcarriers=grid.shape[1])


# ---------------------------------------------------------------------------
# Burst-masked interference


def burst_mask(spec: InterferenceMaskSpec, rng_seed,
               shape=(N_SYMBOLS, N_SUBCARRIERS)) -> np.ndarray:
    """Boolean mask of `burst_count` contiguous runs of ones.

    Contiguity is over the row-major flattened (symbol, subcarrier)
    plane; bursts are separated by at least one inactive RE so the
    number of maximal runs equals burst_count exactly.
    """
    n = int(np.prod(shape))
    b = spec.burst_count
    active = max(int(round(spec.total_active_fraction * n)), b)
    if n - active < b - 1:
        raise ConfigError(
            f"cannot place {b} separated bursts covering {active}/{n} REs")
    rng = np.random.default_rng(rng_seed)

    # Burst lengths: random composition of `active` into b parts >= 1.
    if b > 1:
        cuts = np.sort(rng.choice(np.arange(1, active), size=b - 1,
                                  replace=False))
        lengths = np.diff(np.concatenate(([0], cuts, [active])))
    else:
        lengths = np.array([active])

    # Gaps: b+1 bins summing to n-active, inner gaps >= 1.
    free = n - active - (b - 1)
    cuts = np.sort(rng.integers(0, free + 1, size=b))
    gaps = np.diff(np.concatenate(([0], cuts, [free])))
    gaps[1:-1] += 1 if b > 1 else 0

    mask = np.zeros(n, dtype=bool)
    pos = 0
    for gap, length in zip(gaps[:-1], lengths):
        pos += gap
        mask[pos:pos + length] = True
        pos += length
    return mask.reshape(shape)


def generate_interference(n_interferers: int, spec: InterferenceMaskSpec,
                          profile: TdlProfile, seed) -> np.ndarray:
    """Composite interference grid with unit slot-average power.

    Each interferer is an independent full-band QPSK grid pushed through
    the (high delay spread / Doppler) TDL channel, gated by its own
    burst mask, then rescaled so the slot-average power equals the
    pre-mask value. The sum is normalized to measured unit power.
    """
    if n_interferers < 1:
        raise ConfigError("need at least one interferer")
    total = np.zeros((N_SYMBOLS, N_SUBCARRIERS), dtype=np.complex128)
    for j in range(n_interferers):
        sig_rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, j, 0x1F])
        bits = sig_rng.integers(0, 2, size=2 * N_SYMBOLS * N_SUBCARRIERS)
        sig = qam_modulate(bits, 2).reshape(N_SYMBOLS, N_SUBCARRIERS)
        faded = sig * tdl_frequency_response(
            profile, [seed & 0xFFFFFFFFFFFFFFFF, j, 0x2F])

        mask = burst_mask(spec, [spec.rng_seed & 0xFFFFFFFFFFFFFFFF, j])
        pre_power = np.mean(np.abs(faded) ** 2)
        masked = np.where(mask, faded, 0.0)
        post_power = np.mean(np.abs(masked) ** 2)
        total += masked * np.sqrt(pre_power / post_power)

    return total / np.sqrt(np.mean(np.abs(total) ** 2))


# ---------------------------------------------------------------------------
# Receiver combining


@dataclass(frozen=True)
class GeniePowers:
    """Measured per-component slot-average powers at the receiver."""

    signal: float
    interference: float
    noise: float

    def sinr_db(self, floor_db: float = -140.0,
                ceil_db: float = 60.0) -> float:
        denom = self.interference + self.noise
        if denom <= 0.0:
            return ceil_db
        if self.signal <= 0.0:
            return floor_db
        return float(np.clip(10.0 * np.log10(self.signal / denom),
                             floor_db, ceil_db))

    def sir_db(self) -> float:
        if self.interference <= 0.0:
            return np.inf
        return float(10.0 * np.log10(self.signal / self.interference))


def combine_at_receiver(signal: np.ndarray, interference, snr_db, sir_db,
                        seed) -> tuple[np.ndarray, GeniePowers]:
    """signal + scaled interference + AWGN, with genie component powers.

    Callers provide unit-average-power signal and interference grids;
    interference is scaled by 10^(-sir/20) and noise is complex Gaussian
    with per-RE variance 10^(-snr/10). snr_db/sir_db of None (or +inf)
    disable the respective component.
    """
    rx = signal.copy()
    p_interf = 0.0
    if interference is not None and sir_db is not None \
            and not np.isinf(sir_db):
        scaled = interference * 10.0 ** (-sir_db / 20.0)
        rx += scaled
        p_interf = float(np.mean(np.abs(scaled) ** 2))

    p_noise = 0.0
    if snr_db is not None and not np.isinf(snr_db):
        rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0xA3])
        sigma2 = 10.0 ** (-snr_db / 10.0)
        noise = rng.standard_normal(signal.shape) \
            + 1j * rng.standard_normal(signal.shape)
        noise *= np.sqrt(sigma2 / 2.0)
        rx += noise
        p_noise = float(np.mean(np.abs(noise) ** 2))

    powers = GeniePowers(signal=float(np.mean(np.abs(signal) ** 2)),
                         interference=p_interf, noise=p_noise)
    return rx, powers
