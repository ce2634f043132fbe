"""Fixed-record binary container (.ifr) with a non-blocking writer.

Layout (little-endian throughout):

    header   magic "IFR1" | version u32 | record_count u64 |
             symbols u32 | subcarriers u32 | components u32 | n_scalars u32
    record   envelope (slot_index u64, scenario_id u32, label u8,
             n_interferers u8) followed by the feature payload
             (IQ float16 + 3 float32 + 4 int32)

With production dims the payload is 183,484 bytes and each record
183,498; file length is always header + record_count * record_size.

The writer persists one record in every `sample_every` offered and hands
persistence to a background thread over a bounded queue, so `append`
returns in bounded time no matter how slow the sink is; overflow drops
the newest enqueued record and counts it.
"""

from __future__ import annotations

import queue
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .features import SCALAR_STRUCT, FeatureRecord

MAGIC = b"IFR1"
VERSION = 1

HEADER_STRUCT = struct.Struct("<4sIQIIII")
_COUNT_OFFSET = 8  # record_count position inside the header

ENVELOPE_STRUCT = struct.Struct("<QIBB")

_STOP = object()


class DatasetError(ValueError):
    """Malformed container or misused writer."""


def record_size(iq_shape) -> int:
    return ENVELOPE_STRUCT.size + int(np.prod(iq_shape)) * 2 \
        + SCALAR_STRUCT.size


def pack_record(record: FeatureRecord) -> bytes:
    envelope = ENVELOPE_STRUCT.pack(record.slot_index, record.scenario_id,
                                    record.label, record.n_interferers)
    return envelope + record.serialize_payload()


def unpack_record(buf: bytes, iq_shape) -> FeatureRecord:
    slot, scenario, label, n_interf = ENVELOPE_STRUCT.unpack(
        buf[:ENVELOPE_STRUCT.size])
    return FeatureRecord.parse_payload(
        buf[ENVELOPE_STRUCT.size:], iq_shape=iq_shape, slot_index=slot,
        scenario_id=scenario, label=label, n_interferers=n_interf)


@dataclass
class WriterStats:
    offered: int = 0    # records handed to append()
    sampled: int = 0    # records selected by the 1-in-N sampler
    persisted: int = 0  # records actually written
    dropped: int = 0    # sampled records lost to queue overflow


class RecordWriter:
    """Streaming .ifr writer; one producer, persistence off-thread."""

    def __init__(self, path_or_file, sample_every: int = 10,
                 iq_shape=(14, 3276, 2), n_scalars: int = 7,
                 queue_size: int = 64):
        if sample_every < 1:
            raise DatasetError("sample_every must be >= 1")
        self.sample_every = sample_every
        self.iq_shape = tuple(iq_shape)
        self._payload_bytes = int(np.prod(iq_shape)) * 2 + SCALAR_STRUCT.size
        self.stats = WriterStats()
        self._finalized = False

        if hasattr(path_or_file, "write"):
            self._file = path_or_file
            self._owns_file = False
        else:
            self._file = open(path_or_file, "wb")
            self._owns_file = True
        self._file.write(HEADER_STRUCT.pack(
            MAGIC, VERSION, 0, iq_shape[0], iq_shape[1], iq_shape[2],
            n_scalars))

        self._queue: queue.Queue = queue.Queue(maxsize=queue_size)
        self._persisted = 0
        self._worker = threading.Thread(target=self._drain, daemon=True)
        self._worker.start()

    def _drain(self):
        while True:
            item = self._queue.get()
            if item is _STOP:
                return
            self._file.write(item)
            self._persisted += 1

    def append(self, record: FeatureRecord):
        """Offer a record; never blocks on the sink."""
        if self._finalized:
            raise DatasetError("append after finalize")
        offered = self.stats.offered
        self.stats.offered += 1
        if offered % self.sample_every:
            return
        self.stats.sampled += 1
        buf = pack_record(record)
        if len(buf) != ENVELOPE_STRUCT.size + self._payload_bytes:
            raise DatasetError("record payload does not match writer dims")
        try:
            self._queue.put_nowait(buf)
        except queue.Full:
            self.stats.dropped += 1

    def finalize(self) -> WriterStats:
        """Flush, patch the header count, and report what happened."""
        if self._finalized:
            raise DatasetError("finalize called twice")
        self._finalized = True
        self._queue.put(_STOP)
        self._worker.join()
        self.stats.persisted = self._persisted
        self._file.flush()
        self._file.seek(_COUNT_OFFSET)
        self._file.write(struct.pack("<Q", self.stats.persisted))
        self._file.flush()
        if self._owns_file:
            self._file.close()
        return self.stats


def open_writer(path, sample_every: int = 10, **kwargs) -> RecordWriter:
    return RecordWriter(path, sample_every=sample_every, **kwargs)


@dataclass(frozen=True)
class DatasetHeader:
    version: int
    record_count: int
    iq_shape: tuple
    n_scalars: int

    @property
    def record_size(self) -> int:
        return record_size(self.iq_shape)


def read_header(f) -> DatasetHeader:
    buf = f.read(HEADER_STRUCT.size)
    if len(buf) != HEADER_STRUCT.size:
        raise DatasetError("file too short for header")
    magic, version, count, sym, sc, comp, n_scalars = HEADER_STRUCT.unpack(buf)
    if magic != MAGIC:
        raise DatasetError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DatasetError(f"unsupported version {version}")
    return DatasetHeader(version=version, record_count=count,
                         iq_shape=(sym, sc, comp), n_scalars=n_scalars)


def inspect(path) -> DatasetHeader:
    with open(path, "rb") as f:
        header = read_header(f)
        f.seek(0, 2)
        expected = HEADER_STRUCT.size + header.record_count * header.record_size
        if f.tell() != expected:
            raise DatasetError(
                f"file length {f.tell()} != expected {expected} "
                f"({header.record_count} records)")
    return header


def read_batches(path, batch_size: int):
    """Sequentially yield lists of records, bounded memory."""
    if batch_size < 1:
        raise DatasetError("batch_size must be >= 1")
    header = inspect(path)
    with open(path, "rb") as f:
        f.seek(HEADER_STRUCT.size)
        remaining = header.record_count
        while remaining:
            n = min(batch_size, remaining)
            batch = []
            for _ in range(n):
                buf = f.read(header.record_size)
                if len(buf) != header.record_size:
                    raise DatasetError("truncated record")
                batch.append(unpack_record(buf, header.iq_shape))
            remaining -= n
            yield batch


def iter_records(path):
    for batch in read_batches(path, 256):
        yield from batch
