"""Scenario sweeps: from a sweep specification to labeled feature records.

One record is one uplink slot pushed through the whole chain: transmit
grid, serving-channel fading, optional burst interference, noise, KPM
measurement, and packing. The genie channel response is kept so code
block errors are counted on an equalized copy while the stored IQ stays
the raw received grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import channel, features, grid
from .channel import (
    InterferenceMaskSpec,
    ScenarioConfig,
    TdlProfile,
    combine_at_receiver,
    generate_interference,
    tdl_frequency_response,
)
from .features import FeatureRecord, assemble_record, compute_kpms, \
    count_cb_errors, segment_tb
from .grid import ConfigError, TrafficProfile, generate_tx_slot, mcs_entry
from .labeling import Label

# |H| below this is treated as a dead RE during genie equalization.
_EQ_FLOOR = 1e-6


@dataclass(frozen=True)
class SweepSpec:
    """Parameter lists a synthetic dataset is drawn from, one per record."""

    snr_db: tuple = (10.0, 15.0, 20.0)
    sir_db: tuple = (0.0, 2.5, 5.0, 7.5, 10.0)
    mcs: tuple = ((10, 0),)                  # (index, table) pairs
    n_interferers: tuple = (0, 1)
    n_prbs: int = 273
    high_traffic_fraction: float = 0.5
    serving_profile: str = "tdl-c"
    serving_delay_spread_ns: float = 100.0
    serving_doppler_hz: float = 10.0
    interf_profile: str = "tdl-a"
    interf_delay_spread_ns: float = 300.0
    interf_doppler_hz: float = 100.0
    mask_burst_count: int = 6
    mask_active_fraction: float = 0.2

    @classmethod
    def from_file(cls, path) -> "SweepSpec":
        text = Path(path).read_text()
        data = yaml.safe_load(text) if str(path).endswith((".yaml", ".yml")) \
            else json.loads(text)
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
        for key in ("snr_db", "sir_db", "n_interferers"):
            if key in data:
                data[key] = tuple(data[key])
        if "mcs" in data:
            data["mcs"] = tuple((int(i), int(t)) for i, t in data["mcs"])
        return cls(**data)

    def serving(self) -> TdlProfile:
        return TdlProfile.standard(self.serving_profile,
                                   self.serving_delay_spread_ns * 1e-9,
                                   self.serving_doppler_hz)

    def interferer(self) -> TdlProfile:
        return TdlProfile.standard(self.interf_profile,
                                   self.interf_delay_spread_ns * 1e-9,
                                   self.interf_doppler_hz)

    def draw(self, rng: np.random.Generator,
             seed: int) -> tuple[ScenarioConfig, TrafficProfile]:
        idx, table = self.mcs[rng.integers(len(self.mcs))]
        scenario = ScenarioConfig(
            snr_db=float(rng.choice(self.snr_db)),
            sir_db=float(rng.choice(self.sir_db)),
            mcs=mcs_entry(idx, table),
            delay_profile=self.serving(),
            interf_delay_profile=self.interferer(),
            n_interferers=int(rng.choice(self.n_interferers)),
            mask=InterferenceMaskSpec(
                burst_count=self.mask_burst_count,
                total_active_fraction=self.mask_active_fraction,
                rng_seed=seed),
            seed=seed,
            n_prbs=self.n_prbs,
        )
        traffic = TrafficProfile.high_traffic() \
            if rng.random() < self.high_traffic_fraction \
            else TrafficProfile.no_traffic()
        return scenario, traffic


@dataclass
class SlotDebug:
    """Intermediate slot state, for tests and inspection."""

    tx_grid: np.ndarray
    rx_grid: np.ndarray
    equalized: np.ndarray
    h_serving: np.ndarray
    genie: channel.GeniePowers
    tb_bytes: int
    tx_bits: np.ndarray


def genie_equalize(rx: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Divide out the known serving channel, guarding dead REs."""
    safe = np.where(np.abs(h) < _EQ_FLOOR, _EQ_FLOOR, h)
    return rx / safe


def synthesize_record(scenario: ScenarioConfig, traffic: TrafficProfile,
                      slot_index: int = 0, scenario_id: int = 0,
                      keep_debug: bool = False):
    """Run one slot end to end; returns (FeatureRecord, SlotDebug or None)."""
    seed = scenario.seed
    tx, tb_bytes, tx_bits = generate_tx_slot(scenario, traffic, seed)
    h = tdl_frequency_response(scenario.delay_profile,
                               [seed & 0xFFFFFFFFFFFFFFFF, 0xC4A])
    faded = tx * h
    # Renormalize the realized slot power: the combiner's SNR/SIR scaling
    # assumes unit-average-power inputs, and a fading realization can
    # swing the slot mean by a couple of dB.
    scale = 1.0 / np.sqrt(np.mean(np.abs(faded) ** 2))
    faded *= scale
    h = h * scale

    interference = None
    if scenario.n_interferers > 0:
        interference = generate_interference(
            scenario.n_interferers, scenario.mask,
            scenario.interf_delay_profile, seed)

    rx, genie = combine_at_receiver(faded, interference, scenario.snr_db,
                                    scenario.sir_db, seed)

    equalized = genie_equalize(rx, h)
    cb_total, _ = segment_tb(tb_bytes)
    cb_errors = count_cb_errors(equalized, tx_bits, scenario.mcs, cb_total,
                                n_alloc_subcarriers=scenario.n_prbs
                                * grid.SC_PER_PRB)
    scalars = compute_kpms(rx, genie, scenario.mcs, tb_bytes, cb_errors,
                           n_alloc_subcarriers=scenario.n_prbs
                           * grid.SC_PER_PRB)
    label = Label.INTERF if scenario.n_interferers > 0 else Label.CLEAN
    record = assemble_record(rx, scalars, slot_index=slot_index,
                             scenario_id=scenario_id, label=int(label),
                             n_interferers=scenario.n_interferers)
    debug = SlotDebug(tx_grid=tx, rx_grid=rx, equalized=equalized,
                      h_serving=h, genie=genie, tb_bytes=tb_bytes,
                      tx_bits=tx_bits) if keep_debug else None
    return record, debug


def generate_records(spec: SweepSpec, count: int, seed: int):
    """Yield `count` records drawn from the sweep, deterministically."""
    for i in range(count):
        rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, i])
        slot_seed = int(rng.integers(0, 2 ** 62))
        scenario, traffic = spec.draw(rng, slot_seed)
        record, _ = synthesize_record(scenario, traffic, slot_index=i,
                                      scenario_id=i)
        yield record
