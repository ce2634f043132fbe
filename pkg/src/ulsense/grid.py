"""Transmit-side PUSCH resource grid for one uplink slot.

A slot is a 14 x 3276 complex grid: 14 OFDM symbols by 273 PRBs of 12
subcarriers at 30 kHz spacing (100 MHz carrier, slot duration 500 us).
Data REs carry Gray-mapped QAM symbols selected by the MCS entry; one
symbol (index 2) carries a fixed, receiver-known QPSK DMRS sequence.
Everything is frequency-domain: downstream consumers only ever see the
grid, so no OFDM/CP time-domain processing is performed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_SYMBOLS = 14
N_PRBS = 273
SC_PER_PRB = 12
N_SUBCARRIERS = N_PRBS * SC_PER_PRB  # 3276
DMRS_SYMBOL = 2
SCS_HZ = 30e3
SLOT_DURATION_S = 500e-6
SYMBOL_DURATION_S = SLOT_DURATION_S / N_SYMBOLS

# Seed for the fixed DMRS base sequence; constant so the receiver side
# (RSRP measurement, channel estimation) knows the reference exactly.
_DMRS_SEED = 0x0D53

# Data REs are every symbol except the DMRS one, in symbol-major order.
DATA_SYMBOLS = tuple(s for s in range(N_SYMBOLS) if s != DMRS_SYMBOL)


class ConfigError(ValueError):
    """Invalid scenario / waveform configuration."""


# ---------------------------------------------------------------------------
# MCS tables (TS 38.214 tables 5.1.3.1-1 and 5.1.3.1-2, indices 0..27).
# Entries are (modulation order in bits/symbol, code rate x 1024). The code
# rate is carried for completeness only; no channel coding is applied.

_MCS_TABLE_0 = [
    (2, 120), (2, 157), (2, 193), (2, 251), (2, 308), (2, 379), (2, 449),
    (2, 526), (2, 602), (2, 679), (4, 340), (4, 378), (4, 434), (4, 490),
    (4, 553), (4, 616), (4, 658), (6, 438), (6, 466), (6, 517), (6, 567),
    (6, 616), (6, 666), (6, 719), (6, 772), (6, 822), (6, 873), (6, 910),
]

_MCS_TABLE_1 = [
    (2, 120), (2, 193), (2, 308), (2, 449), (2, 602), (4, 378), (4, 434),
    (4, 490), (4, 553), (4, 616), (4, 658), (6, 466), (6, 517), (6, 567),
    (6, 616), (6, 666), (6, 719), (6, 772), (6, 822), (6, 873), (8, 682.5),
    (8, 711), (8, 754), (8, 797), (8, 841), (8, 885), (8, 916.5), (8, 948),
]

_MCS_TABLES = (_MCS_TABLE_0, _MCS_TABLE_1)


@dataclass(frozen=True)
class McsEntry:
    """One modulation-and-coding-scheme table entry."""

    index: int
    table: int
    modulation_order: int  # bits per symbol: 2, 4, 6 or 8
    code_rate: float       # nominal, informational only


def mcs_entry(index: int, table: int = 0) -> McsEntry:
    """Look up an MCS entry; raises ConfigError on out-of-range values."""
    if table not in (0, 1):
        raise ConfigError(f"unknown MCS table {table}, expected 0 or 1")
    if not 0 <= index < len(_MCS_TABLES[table]):
        raise ConfigError(f"MCS index {index} out of range for table {table}")
    order, rate1024 = _MCS_TABLES[table][index]
    return McsEntry(index=index, table=table, modulation_order=order,
                    code_rate=rate1024 / 1024.0)


# ---------------------------------------------------------------------------
# QAM mapping. Per-axis Gray mapping with the standard nested-level form;
# even bit positions drive the I axis, odd positions the Q axis. All
# constellations have unit average power.

_QAM_NORM = {2: 2.0, 4: 10.0, 6: 42.0, 8: 170.0}


def _axis_levels(bits: np.ndarray) -> np.ndarray:
    """Unnormalized PAM level for each row of axis bits (Gray mapped)."""
    n, m = bits.shape
    level = np.ones(n)
    power = 2
    for col in range(m - 1, 0, -1):
        level = power - (1 - 2 * bits[:, col]) * level
        power *= 2
    return (1 - 2 * bits[:, 0]) * level


def qam_modulate(bits, order: int) -> np.ndarray:
    """Map a bit sequence onto Gray-coded QAM symbols with E[|x|^2] = 1."""
    if order not in _QAM_NORM:
        raise ConfigError(f"unsupported modulation order {order}")
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % order:
        raise ConfigError(
            f"bit count {bits.size} not divisible by modulation order {order}")
    groups = bits.reshape(-1, order)
    i = _axis_levels(groups[:, 0::2])
    q = _axis_levels(groups[:, 1::2])
    return (i + 1j * q) / np.sqrt(_QAM_NORM[order])


def _axis_lut(order: int) -> tuple[np.ndarray, int]:
    """Bit patterns indexed by PAM level rank, for hard-decision demapping."""
    half = order // 2
    patterns = np.array(
        [[(p >> (half - 1 - b)) & 1 for b in range(half)]
         for p in range(2 ** half)], dtype=np.uint8)
    levels = _axis_levels(patterns.astype(np.int64))
    rank = ((levels + (2 ** half - 1)) / 2).astype(np.int64)
    lut = np.zeros_like(patterns)
    lut[rank] = patterns
    return lut, 2 ** half - 1


_AXIS_LUTS = {m: _axis_lut(m) for m in _QAM_NORM}


def qam_demodulate(symbols: np.ndarray, order: int) -> np.ndarray:
    """Hard-decision demap to bits (nearest constellation point)."""
    if order not in _QAM_NORM:
        raise ConfigError(f"unsupported modulation order {order}")
    lut, lmax = _AXIS_LUTS[order]
    scaled = np.asarray(symbols).ravel() * np.sqrt(_QAM_NORM[order])

    def axis_bits(vals):
        idx = np.clip(np.round((vals + lmax) / 2), 0, lmax).astype(np.int64)
        return lut[idx]

    bits = np.empty((scaled.size, order), dtype=np.uint8)
    bits[:, 0::2] = axis_bits(scaled.real)
    bits[:, 1::2] = axis_bits(scaled.imag)
    return bits.ravel()


# ---------------------------------------------------------------------------
# DMRS

_dmrs_cache: np.ndarray | None = None


def dmrs_sequence(n_subcarriers: int = N_SUBCARRIERS) -> np.ndarray:
    """Fixed pseudo-random QPSK reference sequence (first n subcarriers)."""
    global _dmrs_cache
    if _dmrs_cache is None:
        rng = np.random.default_rng(_DMRS_SEED)
        bits = rng.integers(0, 2, size=2 * N_SUBCARRIERS)
        _dmrs_cache = qam_modulate(bits, 2)
        _dmrs_cache.setflags(write=False)
    if not 0 < n_subcarriers <= N_SUBCARRIERS:
        raise ConfigError(f"bad DMRS length {n_subcarriers}")
    return _dmrs_cache[:n_subcarriers]


# ---------------------------------------------------------------------------
# Traffic profiles and slot generation


@dataclass(frozen=True)
class TrafficProfile:
    """Transport-block size sampler for one uplink traffic level.

    "no" traffic keeps the UE connected with small control-sized TBs
    (around 185 bytes, never above 1056); "high" traffic produces TBs
    large enough to segment into multiple code blocks.
    """

    kind: str                 # "no" or "high"
    low: int
    high: int

    @classmethod
    def no_traffic(cls) -> "TrafficProfile":
        return cls(kind="no", low=100, high=1056)

    @classmethod
    def high_traffic(cls, max_tb_bytes: int = 16 * 1056) -> "TrafficProfile":
        return cls(kind="high", low=1057, high=max_tb_bytes)

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "no":
            # Lognormal centered near 185 bytes, clipped to the idle range.
            tb = int(round(rng.lognormal(mean=np.log(185.0), sigma=0.35)))
            return int(np.clip(tb, self.low, self.high))
        return int(rng.integers(self.low, self.high + 1))


def new_grid() -> np.ndarray:
    """Empty slot grid (14 x 3276 complex, all REs zero)."""
    return np.zeros((N_SYMBOLS, N_SUBCARRIERS), dtype=np.complex128)


def generate_tx_slot(scenario, traffic: TrafficProfile, rng_seed: int):
    """Build the transmit grid for one scheduled PUSCH slot.

    Returns (grid, tb_bytes, tx_bits). Data symbols fill every allocated
    RE outside the DMRS symbol; the slot's data power is pinned to
    exactly 1 so downstream SNR/SIR scaling stays calibrated.
    Deterministic for a given (scenario, traffic, rng_seed).
    """
    mcs = mcs_entry(scenario.mcs.index, scenario.mcs.table)
    n_prbs = getattr(scenario, "n_prbs", N_PRBS)
    if n_prbs <= 0:
        raise ConfigError("empty allocation (0 PRBs)")
    if n_prbs > N_PRBS:
        raise ConfigError(f"allocation of {n_prbs} PRBs exceeds {N_PRBS}")

    rng = np.random.default_rng([rng_seed & 0xFFFFFFFFFFFFFFFF, 0x51D])
    tb_bytes = traffic.sample(rng)

    n_sc = n_prbs * SC_PER_PRB
    n_data_res = len(DATA_SYMBOLS) * n_sc
    bits = rng.integers(0, 2, size=n_data_res * mcs.modulation_order,
                        dtype=np.uint8)
    symbols = qam_modulate(bits, mcs.modulation_order)

    grid = new_grid()
    data = symbols.reshape(len(DATA_SYMBOLS), n_sc)
    # Pin the realized data power to 1 (finite higher-QAM draws deviate).
    data = data / np.sqrt(np.mean(np.abs(data) ** 2))
    grid[DATA_SYMBOLS, :n_sc] = data
    grid[DMRS_SYMBOL, :n_sc] = dmrs_sequence(n_sc)
    return grid, tb_bytes, bits


def data_re_values(grid: np.ndarray, n_subcarriers: int = N_SUBCARRIERS,
                   dmrs_symbol: int = DMRS_SYMBOL) -> np.ndarray:
    """Allocated data REs flattened in the same order bits were mapped."""
    rows = [s for s in range(grid.shape[0]) if s != dmrs_symbol]
    return grid[rows, :n_subcarriers].ravel()
