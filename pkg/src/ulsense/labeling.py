"""Traffic-level classification and two-sided ground-truth labeling.

A cell's uplink traffic level in a time window decides the label of the
*other* cell's records in that window: a side transmitting at high
traffic marks the opposite side as interfered. The lookup covering all
level pairs (including the no-UE cases) lives in LABEL_TABLE.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class TrafficLevel(enum.Enum):
    NO_TRAFFIC = "no_traffic"
    HIGH_TRAFFIC = "high_traffic"
    NO_UE = "no_ue"


class Label(enum.IntEnum):
    CLEAN = 0
    INTERF = 1
    NA = 2


# A single code block per slot is connection upkeep, anything more is
# real traffic.
CB_COUNT_THRESHOLD = 1

_NO = TrafficLevel.NO_TRAFFIC
_HIGH = TrafficLevel.HIGH_TRAFFIC
_NOUE = TrafficLevel.NO_UE

LABEL_TABLE = {
    (_HIGH, _NO): (Label.CLEAN, Label.INTERF),
    (_NO, _HIGH): (Label.INTERF, Label.CLEAN),
    (_HIGH, _HIGH): (Label.INTERF, Label.INTERF),
    (_NO, _NO): (Label.CLEAN, Label.CLEAN),
    (_NOUE, _NO): (Label.NA, Label.CLEAN),
    (_NOUE, _HIGH): (Label.NA, Label.CLEAN),
    (_NO, _NOUE): (Label.CLEAN, Label.NA),
    (_HIGH, _NOUE): (Label.CLEAN, Label.NA),
    (_NOUE, _NOUE): (Label.NA, Label.NA),
}


def classify_traffic(cb_total_count: int) -> TrafficLevel:
    """Traffic level from the slot's code-block count."""
    if cb_total_count < 1:
        raise ValueError(
            "no PUSCH in slot (cb_total_count < 1): no record to classify")
    if cb_total_count <= CB_COUNT_THRESHOLD:
        return TrafficLevel.NO_TRAFFIC
    return TrafficLevel.HIGH_TRAFFIC


def label_pair(level1: TrafficLevel,
               level2: TrafficLevel) -> tuple[Label, Label]:
    """Labels for both sides given their traffic levels."""
    return LABEL_TABLE[(level1, level2)]


@dataclass(frozen=True)
class LabeledSlot:
    t: float
    cb_count: int
    label: Label


def _window_level(cb_counts) -> TrafficLevel:
    # High traffic in any slot dominates the window; an empty window
    # means the UE was absent.
    if not cb_counts:
        return TrafficLevel.NO_UE
    if any(c > CB_COUNT_THRESHOLD for c in cb_counts):
        return TrafficLevel.HIGH_TRAFFIC
    return TrafficLevel.NO_TRAFFIC


def label_log_windows(log1, log2, window_s: float):
    """Label two timestamped slot streams against each other.

    Each log is an iterable of (timestamp_s, cb_total_count) on a shared
    clock. Time is cut into fixed windows starting at the earliest
    timestamp; per window each side's level is high traffic if any of
    its slots exceed the CB threshold, no traffic if it has only idle
    slots, and no-UE if it has none. Returns two lists of LabeledSlot in
    input order.
    """
    if window_s <= 0:
        raise ValueError("window must be positive")
    slots1 = [(float(t), int(c)) for t, c in log1]
    slots2 = [(float(t), int(c)) for t, c in log2]
    if not slots1 or not slots2:
        raise ValueError("both logs must contain records")

    lo1, hi1 = min(t for t, _ in slots1), max(t for t, _ in slots1)
    lo2, hi2 = min(t for t, _ in slots2), max(t for t, _ in slots2)
    if hi1 < lo2 or hi2 < lo1:
        raise ValueError("log time ranges do not overlap")

    t0 = min(lo1, lo2)

    def by_window(slots):
        grouped: dict[int, list[int]] = {}
        for t, c in slots:
            grouped.setdefault(int((t - t0) // window_s), []).append(c)
        return grouped

    win1, win2 = by_window(slots1), by_window(slots2)
    labels: dict[int, tuple[Label, Label]] = {}
    for w in set(win1) | set(win2):
        labels[w] = label_pair(_window_level(win1.get(w, [])),
                               _window_level(win2.get(w, [])))

    out1 = [LabeledSlot(t, c, labels[int((t - t0) // window_s)][0])
            for t, c in slots1]
    out2 = [LabeledSlot(t, c, labels[int((t - t0) // window_s)][1])
            for t, c in slots2]
    return out1, out2
