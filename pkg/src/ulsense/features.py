"""Scalar KPMs and the fixed-size inference input record.

The record payload is the IQ tensor (14 x 3276 x 2 half-precision
floats, 183,456 bytes) followed by seven scalars (three float32, four
int32, 28 bytes): 183,484 bytes total, always. An envelope with slot
index, scenario id, label, and interferer count rides alongside for
bookkeeping but is not part of the payload.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .grid import (
    DMRS_SYMBOL,
    McsEntry,
    N_SUBCARRIERS,
    N_SYMBOLS,
    data_re_values,
    qam_demodulate,
)

DB_FLOOR = -140.0
DB_CEIL = 60.0

IQ_SHAPE = (N_SYMBOLS, N_SUBCARRIERS, 2)
IQ_BYTES = N_SYMBOLS * N_SUBCARRIERS * 2 * 2   # float16 pairs: 183,456
SCALAR_STRUCT = struct.Struct("<fffiiii")      # 28 bytes
PAYLOAD_BYTES = IQ_BYTES + SCALAR_STRUCT.size  # 183,484

N_SCALARS = 7

# Single-CB size limits in bytes; the smaller base graph handles short
# blocks, the larger one everything else.
CB_SMALL_BYTES = 480
CB_LARGE_BYTES = 1056

BG1 = "BG1"
BG2 = "BG2"


class RecordError(ValueError):
    """Invalid feature record contents."""


def clamp_db(linear_power: float) -> float:
    """10*log10 with the [-140, +60] dB clamp used for all scalar KPMs."""
    if linear_power <= 0.0 or not math.isfinite(linear_power):
        return DB_FLOOR
    return float(np.clip(10.0 * np.log10(linear_power), DB_FLOOR, DB_CEIL))


def segment_tb(tb_bytes: int) -> tuple[int, str]:
    """Code-block count and base graph for a transport block size."""
    if tb_bytes <= 0:
        raise RecordError(f"transport block size must be positive, got {tb_bytes}")
    if tb_bytes <= CB_SMALL_BYTES:
        return 1, BG2
    if tb_bytes <= CB_LARGE_BYTES:
        return 1, BG1
    return math.ceil(tb_bytes / CB_LARGE_BYTES), BG1


@dataclass(frozen=True)
class ScalarFeatures:
    """The seven scalar inputs fed to the classifier beside the IQ."""

    rssi_db: float
    rsrp_db: float
    sinr_db: float
    mcs_index: int
    mcs_table: int
    cb_err_count: int
    cb_total_count: int

    def __post_init__(self):
        if not 0 <= self.cb_err_count <= self.cb_total_count:
            raise RecordError(
                f"cb_err_count {self.cb_err_count} outside "
                f"[0, {self.cb_total_count}]")
        if self.cb_total_count < 1:
            raise RecordError("scheduled slot must have cb_total_count >= 1")

    def as_vector(self) -> np.ndarray:
        """Feature vector in payload order, widened to float32."""
        return np.array([self.rssi_db, self.rsrp_db, self.sinr_db,
                         self.mcs_index, self.mcs_table,
                         self.cb_err_count, self.cb_total_count],
                        dtype=np.float32)

    def pack(self) -> bytes:
        return SCALAR_STRUCT.pack(
            self.rssi_db, self.rsrp_db, self.sinr_db, self.mcs_index,
            self.mcs_table, self.cb_err_count, self.cb_total_count)

    @classmethod
    def unpack(cls, buf: bytes) -> "ScalarFeatures":
        rssi, rsrp, sinr, idx, table, err, total = SCALAR_STRUCT.unpack(buf)
        return cls(rssi_db=rssi, rsrp_db=rsrp, sinr_db=sinr, mcs_index=idx,
                   mcs_table=table, cb_err_count=err, cb_total_count=total)


def compute_kpms(rx: np.ndarray, genie, mcs: McsEntry, tb_bytes: int,
                 demod_errors: int,
                 n_alloc_subcarriers: int = N_SUBCARRIERS,
                 dmrs_symbol: int = DMRS_SYMBOL) -> ScalarFeatures:
    """Measure RSSI/RSRP on the received grid and assemble the scalars.

    RSSI averages over every RE of the slot, RSRP over the (allocated)
    DMRS REs only; SINR comes from the genie component powers recorded
    at combining time. CB counts follow the segmentation of tb_bytes.
    """
    rssi = clamp_db(float(np.mean(np.abs(rx) ** 2)))
    rsrp = clamp_db(float(np.mean(
        np.abs(rx[dmrs_symbol, :n_alloc_subcarriers]) ** 2)))
    cb_total, _ = segment_tb(tb_bytes)
    return ScalarFeatures(rssi_db=rssi, rsrp_db=rsrp,
                          sinr_db=genie.sinr_db(DB_FLOOR, DB_CEIL),
                          mcs_index=mcs.index, mcs_table=mcs.table,
                          cb_err_count=demod_errors,
                          cb_total_count=cb_total)


def cb_spans(n_data_res: int, cb_count: int) -> list[tuple[int, int]]:
    """Near-equal contiguous RE spans, one per code block."""
    bounds = np.linspace(0, n_data_res, cb_count + 1).astype(int)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(cb_count)]


def count_cb_errors(rx: np.ndarray, tx_bits: np.ndarray, mcs: McsEntry,
                    cb_count: int,
                    n_alloc_subcarriers: int = N_SUBCARRIERS,
                    dmrs_symbol: int = DMRS_SYMBOL) -> int:
    """Number of code blocks whose hard-decision bits mismatch the tx.

    `rx` should be the (genie-)equalized grid so residual errors reflect
    noise and interference rather than uncompensated fading. The data
    REs are partitioned into cb_count contiguous spans; a block is
    errored if any of its demodulated bits differs from the transmitted
    ones.
    """
    if cb_count < 1:
        raise RecordError("cb_count must be >= 1")
    data = data_re_values(rx, n_alloc_subcarriers, dmrs_symbol)
    bits = qam_demodulate(data, mcs.modulation_order)
    tx = np.asarray(tx_bits, dtype=np.uint8).ravel()
    if bits.size != tx.size:
        raise RecordError(
            f"bit count mismatch: demodulated {bits.size}, tx {tx.size}")
    errors = 0
    order = mcs.modulation_order
    for start, stop in cb_spans(data.size, cb_count):
        if not np.array_equal(bits[start * order:stop * order],
                              tx[start * order:stop * order]):
            errors += 1
    return errors


@dataclass(frozen=True)
class FeatureRecord:
    """One inference input: IQ tensor + scalars + bookkeeping envelope."""

    iq: np.ndarray             # float16, (14, 3276, 2)
    scalars: ScalarFeatures
    slot_index: int = 0
    scenario_id: int = 0
    label: int = 0
    n_interferers: int = 0

    def serialize_payload(self) -> bytes:
        payload = self.iq.astype("<f2", copy=False).tobytes() \
            + self.scalars.pack()
        if len(payload) != self.iq.size * 2 + SCALAR_STRUCT.size:
            raise RecordError("payload size mismatch")
        return payload

    @classmethod
    def parse_payload(cls, buf: bytes, iq_shape=IQ_SHAPE,
                      **envelope) -> "FeatureRecord":
        iq_bytes = int(np.prod(iq_shape)) * 2
        if len(buf) != iq_bytes + SCALAR_STRUCT.size:
            raise RecordError(
                f"payload is {len(buf)} bytes, expected "
                f"{iq_bytes + SCALAR_STRUCT.size}")
        iq = np.frombuffer(buf[:iq_bytes], dtype="<f2").reshape(iq_shape)
        scalars = ScalarFeatures.unpack(buf[iq_bytes:])
        return cls(iq=iq, scalars=scalars, **envelope)


def assemble_record(rx: np.ndarray, scalars: ScalarFeatures,
                    slot_index: int = 0, scenario_id: int = 0,
                    label: int = 0, n_interferers: int = 0) -> FeatureRecord:
    """Pack a received grid into the fixed-size record.

    IQ is stored half-precision in (symbol, subcarrier, component)
    order with component 0 = real, 1 = imag. Non-finite inputs (or
    values that overflow float16) are rejected.
    """
    if rx.shape != (N_SYMBOLS, N_SUBCARRIERS):
        raise RecordError(f"grid shape {rx.shape} != "
                          f"{(N_SYMBOLS, N_SUBCARRIERS)}")
    if not np.isfinite(rx).all():
        raise RecordError("grid contains non-finite IQ values")
    iq = np.empty(IQ_SHAPE, dtype=np.float16)
    with np.errstate(over="ignore"):  # overflow detected just below
        iq[..., 0] = rx.real
        iq[..., 1] = rx.imag
    if not np.isfinite(iq).all():
        raise RecordError("IQ overflows float16 range")
    return FeatureRecord(iq=iq, scalars=scalars, slot_index=slot_index,
                         scenario_id=scenario_id, label=label,
                         n_interferers=n_interferers)
