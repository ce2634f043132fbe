"""Slot-clocked inference pipeline with an off-critical-path worker.

The producer emits one record per slot period on an absolute schedule
and never waits for inference: finished records go into a one-deep
latest-wins queue, so a slow model drops stale slots instead of stalling
slot generation. Latencies, drops, and deadline misses are collected in
TimingStats and can be dumped as a plot-ready CSV.
"""

from __future__ import annotations

import io
import threading
import time
from dataclasses import dataclass, field

import numpy as np


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    slot_period_us: float = 500.0
    warmup_enabled: bool = True
    log_sample_every: int = 10
    latency_budget_us: float = 1000.0
    backlog: int = 1     # pending slots kept for the inference worker

    def __post_init__(self):
        if self.slot_period_us <= 0:
            raise ValueError("slot_period_us must be positive")
        if self.backlog < 1:
            raise ValueError("backlog must be >= 1")


@dataclass
class InferenceSample:
    slot_index: int
    latency_us: float
    phase: str
    cold: bool


@dataclass
class TimingStats:
    """Per-inference latencies plus producer-side cadence bookkeeping."""

    samples: list = field(default_factory=list)
    drops: int = 0
    generated: int = 0
    # (slot_index, scheduled_monotonic_s, actual_monotonic_s) per slot
    gen_times: list = field(default_factory=list)

    def add(self, slot_index: int, latency_us: float, phase: str = "all",
            cold: bool = False):
        self.samples.append(InferenceSample(slot_index, latency_us,
                                            phase, cold))

    def latencies(self, phase=None, include_cold: bool = False) -> np.ndarray:
        vals = [s.latency_us for s in self.samples
                if (include_cold or not s.cold)
                and (phase is None or s.phase == phase)]
        return np.asarray(vals, dtype=float)

    def phases(self):
        return sorted({s.phase for s in self.samples})

    def moving_average(self, window: int = 5, phase=None) -> np.ndarray:
        lat = self.latencies(phase)
        if lat.size < window:
            return np.empty(0)
        kernel = np.ones(window) / window
        return np.convolve(lat, kernel, mode="valid")

    def cdf(self, phase=None):
        """(sorted latencies, cumulative probability ending at 1)."""
        lat = np.sort(self.latencies(phase))
        if lat.size == 0:
            raise StatsError("no samples")
        p = np.arange(1, lat.size + 1) / lat.size
        return lat, p

    def percentiles(self, phase=None) -> dict:
        lat = self.latencies(phase)
        if lat.size == 0:
            raise StatsError("no samples")
        return {"median": float(np.percentile(lat, 50)),
                "p95": float(np.percentile(lat, 95)),
                "p99": float(np.percentile(lat, 99))}

    def miss_count(self, budget_us: float, phase=None) -> int:
        lat = self.latencies(phase)
        return int((lat > budget_us).sum())

    def cadence_intervals_s(self) -> np.ndarray:
        actual = np.asarray([t for _, _, t in self.gen_times])
        return np.diff(actual)


def timing_report(stats: TimingStats, budget_us: float = 1000.0,
                  window: int = 5) -> str:
    """Plot-ready CSV: long format with one series per row group."""
    if not stats.samples:
        raise StatsError("no samples")
    out = io.StringIO()
    out.write("series,phase,x,y\n")
    phases = stats.phases() + [None]
    for phase in phases:
        tag = phase or "all"
        if stats.latencies(phase).size == 0:
            continue
        for i, v in enumerate(stats.moving_average(window, phase)):
            out.write(f"moving_avg_w{window},{tag},{i},{v:.3f}\n")
        lat, p = stats.cdf(phase)
        for v, q in zip(lat, p):
            out.write(f"cdf,{tag},{v:.3f},{q:.6f}\n")
        for name, v in stats.percentiles(phase).items():
            out.write(f"summary,{tag},{name},{v:.3f}\n")
        out.write(f"summary,{tag},misses_over_{budget_us:.0f}us,"
                  f"{stats.miss_count(budget_us, phase)}\n")
    out.write(f"summary,all,backlog_drops,{stats.drops}\n")
    out.write(f"summary,all,slots_generated,{stats.generated}\n")
    return out.getvalue()


class _LatestQueue:
    """Bounded latest-wins handoff; put never blocks, overflow drops oldest."""

    def __init__(self, maxlen: int):
        self._items: list = []
        self._maxlen = maxlen
        self._lock = threading.Lock()
        self._ready = threading.Condition(self._lock)
        self._closed = False
        self.dropped = 0

    def put(self, item):
        with self._ready:
            if len(self._items) >= self._maxlen:
                self._items.pop(0)
                self.dropped += 1
            self._items.append(item)
            self._ready.notify()

    def close(self):
        with self._ready:
            self._closed = True
            self._ready.notify_all()

    def get(self):
        with self._ready:
            while not self._items and not self._closed:
                self._ready.wait()
            if self._items:
                return self._items.pop(0)
            return None


def _phase_of(record) -> str:
    try:
        return "high" if record.scalars.cb_total_count > 1 else "no"
    except AttributeError:
        return "all"


def run_pipeline(records, session, config: PipelineConfig,
                 writer=None) -> tuple[list, TimingStats]:
    """Drive records through inference at slot cadence.

    `records` is an iterable pulled on the producer thread, one item per
    slot tick, so generation cost lives on the generation side. The
    session only needs a forward(record) -> Prediction method. Returns
    predictions as (slot_index, Prediction) ordered by slot index, plus
    the collected TimingStats.
    """
    if config.warmup_enabled and hasattr(session, "warmup"):
        session.warmup()

    stats = TimingStats()
    queue = _LatestQueue(config.backlog)
    results = []
    results_lock = threading.Lock()

    def worker():
        while True:
            item = queue.get()
            if item is None:
                return
            slot_index, record = item
            prediction = session.forward(record)
            stats.add(slot_index, prediction.latency_us, _phase_of(record),
                      getattr(prediction, "cold", False))
            with results_lock:
                results.append((slot_index, prediction))

    thread = threading.Thread(target=worker, daemon=True)
    thread.start()

    period_s = config.slot_period_us / 1e6
    t0 = time.monotonic()
    for i, record in enumerate(records):
        scheduled = t0 + i * period_s
        now = time.monotonic()
        if scheduled > now:
            time.sleep(scheduled - now)
        slot_index = getattr(record, "slot_index", i)
        if writer is not None:
            writer.append(record)
        queue.put((slot_index, record))
        stats.generated += 1
        stats.gen_times.append((slot_index, scheduled, time.monotonic()))

    queue.close()
    thread.join()
    stats.drops = queue.dropped
    results.sort(key=lambda pair: pair[0])
    return results, stats
