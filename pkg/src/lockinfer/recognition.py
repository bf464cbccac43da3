"""Spin and unlock-event recognition from x-axis displacement features.

A window is a *spin* when all four displacement features (pos, neg, summed,
total) fall within one standard deviation of the means learned from
labelled unlocking data. An unlock event is declared when at least
``min_spins`` spin windows fit inside an ``event_window_seconds`` span.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .signal import CumulativeDisplacement, GyroTrace

log = logging.getLogger(__name__)

FEATURES = ("pos", "neg", "summed", "total")

# min_spins defaults per lock; the safe value scales the padlock's 5 by the
# ratio of shortest total transitions (708 vs 123 units), rounded down.
DEFAULT_MIN_SPINS = {"padlock": 5, "safe": 9}


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class SpinProfile:
    mean: tuple[float, float, float, float]
    std: tuple[float, float, float, float]
    window_seconds: float = 5.0
    stride_seconds: float = 1.0
    min_spins: int = 5
    event_window_seconds: float = 90.0
    n_windows: int = 0

    def __post_init__(self):
        if len(self.mean) != 4 or len(self.std) != 4:
            raise ValueError("spin profile needs four feature statistics")
        if any(s < 0 for s in self.std):
            raise ValueError("standard deviations must be >= 0")
        if self.window_seconds <= 0 or self.stride_seconds <= 0:
            raise ValueError("window and stride must be positive")
        if self.min_spins < 1:
            raise ValueError("min_spins must be >= 1")

    def accepts(self, feats: np.ndarray) -> np.ndarray:
        """Boolean mask over rows of an ``(n, 4)`` feature array."""
        lo = np.asarray(self.mean) - np.asarray(self.std)
        hi = np.asarray(self.mean) + np.asarray(self.std)
        return np.all((feats >= lo) & (feats <= hi), axis=-1)

    def to_dict(self) -> dict:
        return {
            "mean": dict(zip(FEATURES, self.mean)),
            "std": dict(zip(FEATURES, self.std)),
            "window_seconds": self.window_seconds,
            "stride_seconds": self.stride_seconds,
            "min_spins": self.min_spins,
            "event_window_seconds": self.event_window_seconds,
            "n_windows": self.n_windows,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpinProfile":
        return cls(
            mean=tuple(float(d["mean"][f]) for f in FEATURES),
            std=tuple(float(d["std"][f]) for f in FEATURES),
            window_seconds=float(d["window_seconds"]),
            stride_seconds=float(d["stride_seconds"]),
            min_spins=int(d["min_spins"]),
            event_window_seconds=float(d["event_window_seconds"]),
            n_windows=int(d.get("n_windows", 0)),
        )


@dataclass(frozen=True)
class SpinWindow:
    start_t: float
    end_t: float


@dataclass(frozen=True)
class UnlockEvent:
    start_t: float
    end_t: float
    spin_count: int


def window_spans(trace: GyroTrace, window_seconds: float, stride_seconds: float,
                 t_from: float | None = None, t_to: float | None = None):
    """Stride-aligned windows lying fully inside ``[t_from, t_to]``.

    Returns ``(start_idx, end_idx)`` arrays of sample indices.
    """
    t = trace.t
    if t.size < 2:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    t_from = t[0] if t_from is None else max(t_from, t[0])
    t_to = t[-1] if t_to is None else min(t_to, t[-1])
    n = int(np.floor((t_to - t_from - window_seconds) / stride_seconds + 1e-9)) + 1
    if n <= 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    starts = t_from + stride_seconds * np.arange(n)
    # half-sample tolerance keeps index lookup stable against float drift
    tol = 0.5 / trace.sample_rate_hz
    a = np.searchsorted(t, starts - tol, side="left")
    b = np.searchsorted(t, starts + window_seconds + tol, side="right") - 1
    b = np.minimum(b, t.size - 1)
    keep = b > a
    return a[keep], b[keep]


def window_features(trace: GyroTrace, window_seconds: float = 5.0, stride_seconds: float = 1.0,
                    t_from: float | None = None, t_to: float | None = None,
                    cumulative: CumulativeDisplacement | None = None):
    a, b = window_spans(trace, window_seconds, stride_seconds, t_from, t_to)
    cum = cumulative or CumulativeDisplacement(trace)
    return a, b, cum.features(a, b)


def learn_spin_profile(
    labeled: Iterable[tuple[GyroTrace, Sequence[tuple[float, float]]]],
    window_seconds: float = 5.0,
    stride_seconds: float = 1.0,
    min_spins: int = 5,
    event_window_seconds: float = 90.0,
) -> SpinProfile:
    """Feature means and sample deviations over windows inside unlock intervals."""
    rows = []
    for trace, intervals in labeled:
        cum = CumulativeDisplacement(trace)
        for t0, t1 in intervals:
            _, _, f = window_features(trace, window_seconds, stride_seconds, t0, t1, cum)
            rows.append(f)
    feats = np.concatenate(rows) if rows else np.zeros((0, 4))
    return spin_profile_from_features(feats, window_seconds, stride_seconds, min_spins, event_window_seconds)


def spin_profile_from_features(feats, window_seconds: float = 5.0, stride_seconds: float = 1.0,
                               min_spins: int = 5, event_window_seconds: float = 90.0) -> SpinProfile:
    """Mean and sample deviation (n - 1) of ``(n, 4)`` window feature rows."""
    feats = np.asarray(feats, dtype=np.float64).reshape(-1, 4)
    if feats.shape[0] == 0:
        raise TrainingError("no labelled unlock windows to learn from")
    if feats.shape[0] == 1:
        warnings.warn("spin profile learned from a single window; deviations are zero", RuntimeWarning)
        std = np.zeros(4)
    else:
        std = feats.std(axis=0, ddof=1)
    return SpinProfile(
        mean=tuple(float(v) for v in feats.mean(axis=0)),
        std=tuple(float(v) for v in std),
        window_seconds=window_seconds,
        stride_seconds=stride_seconds,
        min_spins=min_spins,
        event_window_seconds=event_window_seconds,
        n_windows=int(feats.shape[0]),
    )


def detect_spins(trace: GyroTrace, profile: SpinProfile,
                 cumulative: CumulativeDisplacement | None = None) -> list[SpinWindow]:
    """Every stride-aligned window whose four features pass the one-sigma test."""
    a, b, feats = window_features(trace, profile.window_seconds, profile.stride_seconds,
                                  cumulative=cumulative)
    hit = profile.accepts(feats)
    t = trace.t
    return [SpinWindow(float(t[i]), float(t[j])) for i, j in zip(a[hit], b[hit])]


def merge_windows(windows: Sequence[SpinWindow]) -> list[tuple[float, float]]:
    """Union of overlapping windows as ``(start, end)`` spans."""
    out: list[list[float]] = []
    for w in sorted(windows, key=lambda w: w.start_t):
        if out and w.start_t <= out[-1][1]:
            out[-1][1] = max(out[-1][1], w.end_t)
        else:
            out.append([w.start_t, w.end_t])
    return [tuple(s) for s in out]


def group_spins(spins: Sequence[SpinWindow], min_spins: int, event_window_seconds: float) -> list[UnlockEvent]:
    """Events where ``min_spins`` spin windows fit inside one span, merged when they overlap."""
    spins = sorted(spins, key=lambda w: (w.start_t, w.end_t))
    n = len(spins)
    if n < min_spins:
        return []
    starts = np.array([w.start_t for w in spins])
    ends = np.array([w.end_t for w in spins])
    # prefix max of ends so "last window of a group" is well defined
    run_end = np.maximum.accumulate(ends)
    member = np.zeros(n, dtype=bool)
    for i in range(n - min_spins + 1):
        j = i + min_spins - 1
        if run_end[j] - starts[i] <= event_window_seconds + 1e-9:
            member[i : j + 1] = True
    events: list[UnlockEvent] = []
    cur = None
    for i in np.flatnonzero(member):
        # qualifying windows that overlap the event, or start within one event
        # span of its first window, belong to the same unlock
        if cur is not None and (starts[i] <= cur[1]
                                or starts[i] - cur[0] <= event_window_seconds + 1e-9):
            cur[1] = max(cur[1], ends[i])
            cur[2] += 1
        else:
            if cur is not None:
                events.append(UnlockEvent(cur[0], cur[1], cur[2]))
            cur = [starts[i], ends[i], 1]
    if cur is not None:
        events.append(UnlockEvent(cur[0], cur[1], cur[2]))
    return [
        UnlockEvent(float(e.start_t), float(e.end_t),
                    int(np.count_nonzero((starts >= e.start_t) & (ends <= e.end_t))))
        for e in events
    ]


def detect_unlock_events(trace: GyroTrace, profile: SpinProfile,
                         spins: Sequence[SpinWindow] | None = None) -> list[UnlockEvent]:
    if spins is None:
        spins = detect_spins(trace, profile)
    events = group_spins(spins, profile.min_spins, profile.event_window_seconds)
    log.debug("%d spin windows -> %d unlock events", len(spins), len(events))
    return events


def extract_event(trace: GyroTrace, event: UnlockEvent, pad_seconds: float | None = None,
                  profile: SpinProfile | None = None, quiet_seconds: float = 1.0,
                  activity_fraction: float = 0.05) -> GyroTrace:
    """Sub-trace around an event, padded by one window length by default.

    Spin windows can start after the motion does and the slow final approach
    rarely passes the spin test, so after padding each edge keeps growing
    until it meets ``quiet_seconds`` of idle signal (``|x|`` below
    ``activity_fraction`` of the event's 99th-percentile speed).
    """
    if pad_seconds is None:
        pad_seconds = profile.window_seconds if profile is not None else 5.0
    a = int(np.searchsorted(trace.t, event.start_t - pad_seconds, side="left"))
    b = int(np.searchsorted(trace.t, event.end_t + pad_seconds, side="right"))
    if b - a < 2 or quiet_seconds <= 0:
        return trace.slice(a, b)
    mag = np.abs(trace.x)
    thr = activity_fraction * np.percentile(mag[a:b], 99)
    active = np.flatnonzero(mag > thr)
    if active.size:
        # walk outward across active samples separated by less than quiet_seconds
        t = trace.t
        gaps = np.flatnonzero(np.diff(t[active]) >= quiet_seconds)
        run_start = np.concatenate(([0], gaps + 1))
        run_end = np.concatenate((gaps, [active.size - 1]))
        first, last = active[run_start], active[run_end]
        touching = (first < b) & (last >= a)
        if touching.any():
            a = min(a, int(first[touching].min()))
            b = max(b, int(last[touching].max()) + 1)
    return trace.slice(a, b)


def with_lock_defaults(profile: SpinProfile, lock_name: str) -> SpinProfile:
    return replace(profile, min_spins=DEFAULT_MIN_SPINS.get(lock_name, profile.min_spins))
