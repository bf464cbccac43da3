"""Split an unlock trace into phases at the slowest-motion points."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lockmodel import LockSpec
from .signal import (
    DEFAULT_SMOOTH_WINDOW,
    DisplacementFeatures,
    GyroTrace,
    InsufficientPeaksError,
    default_min_separation,
    find_top_peaks,
    gaussian_smooth,
    integrate_displacement,
)

AMPLIFY = 10.0
# samples quieter than this fraction of the 99th-percentile speed count as idle
ACTIVITY_FRACTION = 0.05


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseSegments:
    boundaries: tuple[int, ...]
    features: tuple[DisplacementFeatures, ...]
    spans: tuple[tuple[int, int], ...]

    def boundary_times(self, trace: GyroTrace) -> list[float]:
        return [float(trace.t[b]) for b in self.boundaries]


def slowdown_series(x, window: int = DEFAULT_SMOOTH_WINDOW) -> np.ndarray:
    """``|x|``, negated and amplified, then Gaussian-smoothed: peaks mark slowdowns."""
    return gaussian_smooth(-AMPLIFY * np.abs(np.asarray(x, dtype=np.float64)), window)


def active_span(x, fraction: float = ACTIVITY_FRACTION) -> tuple[int, int]:
    mag = np.abs(np.asarray(x, dtype=np.float64))
    if mag.size == 0:
        return 0, 0
    thr = fraction * np.percentile(mag, 99)
    idx = np.flatnonzero(mag > thr)
    if idx.size == 0:
        return 0, mag.size - 1
    return int(idx[0]), int(idx[-1])


def segment_phases(
    trace: GyroTrace,
    spec: LockSpec,
    min_separation: int | None = None,
    window: int = DEFAULT_SMOOTH_WINDOW,
) -> PhaseSegments:
    """Boundaries at the ``P - 1`` strongest slowdown peaks, plus per-phase features.

    Peaks are searched only inside the active part of the trace so idle
    lead-in/out never wins. A boundary index closes one phase and opens the
    next; phase ``i`` integrates over ``t[b_{i-1}]..t[b_i]``.
    """
    n_bound = spec.n_phases - 1
    n = len(trace)
    if n < 3:
        raise SegmentationError("trace too short to segment")
    if min_separation is None:
        min_separation = default_min_separation(trace)
    series = slowdown_series(trace.x, window)
    lo, hi = active_span(trace.x)
    if n_bound:
        try:
            local = find_top_peaks(series[lo : hi + 1], n_bound, min_separation)
        except InsufficientPeaksError as exc:
            raise SegmentationError(str(exc)) from None
        bounds = tuple(int(b) + lo for b in local)
    else:
        bounds = ()
    edges = (0,) + bounds + (n - 1,)
    spans = tuple(zip(edges[:-1], edges[1:]))
    feats = tuple(integrate_displacement(trace, s) for s in spans)
    return PhaseSegments(bounds, feats, spans)


def dump_segmentation(path: str | Path, trace: GyroTrace, segments: PhaseSegments,
                      window: int = DEFAULT_SMOOTH_WINDOW) -> None:
    """CSV of the transformed series with the chosen boundaries flagged."""
    series = slowdown_series(trace.x, window)
    flag = np.zeros(len(trace), dtype=int)
    flag[list(segments.boundaries)] = 1
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,gx,slowdown,boundary\n")
        np.savetxt(fh, np.column_stack([trace.t, trace.x, series, flag]),
                   delimiter=",", fmt=["%.6f", "%.6g", "%.6g", "%d"])


def write_segments_csv(path: str | Path, trace: GyroTrace, segments: PhaseSegments) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("phase,start_t,end_t,pos,neg,summed,total\n")
        for i, ((a, b), f) in enumerate(zip(segments.spans, segments.features), start=1):
            fh.write(f"{i},{trace.t[a]:.6f},{trace.t[b]:.6f},"
                     + ",".join(f"{v:.9g}" for v in f.as_tuple()) + "\n")
