"""Reader/writer for the .ifr feature-record container.

Independent implementation of the documented format (docs/formats.md in
the main repository); the trainer deliberately does not import the
runtime package, the byte layout is the contract.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"IFR1"
VERSION = 1
HEADER = struct.Struct("<4sIQIIII")
ENVELOPE = struct.Struct("<QIBB")
SCALARS = struct.Struct("<fffiiii")

SCALAR_NAMES = ("rssi_db", "rsrp_db", "sinr_db", "mcs_index", "mcs_table",
                "cb_err_count", "cb_total_count")


class IfrError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    slot_index: int
    scenario_id: int
    label: int
    n_interferers: int
    iq: np.ndarray        # float16 (symbols, subcarriers, 2)
    scalars: np.ndarray   # float32 (7,), payload order


@dataclass(frozen=True)
class IfrInfo:
    record_count: int
    iq_shape: tuple
    n_scalars: int

    @property
    def payload_bytes(self) -> int:
        return int(np.prod(self.iq_shape)) * 2 + SCALARS.size

    @property
    def record_bytes(self) -> int:
        return ENVELOPE.size + self.payload_bytes


def read_info(path) -> IfrInfo:
    with open(path, "rb") as f:
        buf = f.read(HEADER.size)
        if len(buf) != HEADER.size:
            raise IfrError("file too short for header")
        magic, version, count, sym, sc, comp, n_scalars = HEADER.unpack(buf)
        if magic != MAGIC:
            raise IfrError(f"bad magic {magic!r}")
        if version != VERSION:
            raise IfrError(f"unsupported version {version}")
        info = IfrInfo(record_count=count, iq_shape=(sym, sc, comp),
                       n_scalars=n_scalars)
        f.seek(0, 2)
        if f.tell() != HEADER.size + count * info.record_bytes:
            raise IfrError("file length does not match header")
    return info


def _parse(buf: bytes, info: IfrInfo) -> Record:
    slot, scenario, label, n_interf = ENVELOPE.unpack(buf[:ENVELOPE.size])
    body = buf[ENVELOPE.size:]
    iq_bytes = int(np.prod(info.iq_shape)) * 2
    iq = np.frombuffer(body[:iq_bytes], dtype="<f2").reshape(info.iq_shape)
    scalars = np.array(SCALARS.unpack(body[iq_bytes:]), dtype=np.float32)
    return Record(slot_index=slot, scenario_id=scenario, label=label,
                  n_interferers=n_interf, iq=iq, scalars=scalars)


class IfrReader:
    """Random-access record reader (one open handle, seek per record)."""

    def __init__(self, path):
        self.path = path
        self.info = read_info(path)
        self._file = open(path, "rb")

    def __len__(self):
        return self.info.record_count

    def read(self, index: int) -> Record:
        if not 0 <= index < len(self):
            raise IndexError(index)
        self._file.seek(HEADER.size + index * self.info.record_bytes)
        return _parse(self._file.read(self.info.record_bytes), self.info)

    def read_scalars(self, index: int) -> np.ndarray:
        """Just the 28-byte scalar block, skipping the IQ payload."""
        if not 0 <= index < len(self):
            raise IndexError(index)
        offset = HEADER.size + index * self.info.record_bytes \
            + ENVELOPE.size + int(np.prod(self.info.iq_shape)) * 2
        self._file.seek(offset)
        return np.array(SCALARS.unpack(self._file.read(SCALARS.size)),
                        dtype=np.float32)

    def labels(self) -> np.ndarray:
        """Envelope (label, n_interferers) pairs without payload decode."""
        out = np.empty((len(self), 2), dtype=np.int64)
        for i in range(len(self)):
            self._file.seek(HEADER.size + i * self.info.record_bytes)
            _, _, label, n_interf = ENVELOPE.unpack(
                self._file.read(ENVELOPE.size))
            out[i] = (label, n_interf)
        return out

    def close(self):
        self._file.close()


def write_ifr(path, records, iq_shape, n_scalars: int = 7):
    """Small synchronous writer, used for test fixtures."""
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, len(records), iq_shape[0],
                            iq_shape[1], iq_shape[2], n_scalars))
        for r in records:
            f.write(ENVELOPE.pack(r.slot_index, r.scenario_id, r.label,
                                  r.n_interferers))
            f.write(np.ascontiguousarray(r.iq, dtype="<f2").tobytes())
            f.write(SCALARS.pack(float(r.scalars[0]), float(r.scalars[1]),
                                 float(r.scalars[2]), int(r.scalars[3]),
                                 int(r.scalars[4]), int(r.scalars[5]),
                                 int(r.scalars[6])))
