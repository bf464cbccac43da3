"""Gyroscope traces and the 1-D signal processing shared by every stage."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .kernels import interval_contributions

DEFAULT_SMOOTH_WINDOW = 15
DEFAULT_MIN_SEPARATION_S = 2.0


class TraceLoadError(ValueError):
    pass


class InsufficientPeaksError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GyroTrace:
    """Timestamped angular velocity; only the x axis is used downstream."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    sample_rate_hz: float | None = None

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=np.float64)
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        if t.ndim != 1 or t.shape != x.shape:
            raise ValueError("t and x must be 1-D and equally long")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        for name in ("y", "z"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.ascontiguousarray(v, dtype=np.float64))
        if self.sample_rate_hz is None:
            rate = 1.0 / float(np.median(np.diff(t))) if t.size > 1 else float("nan")
            object.__setattr__(self, "sample_rate_hz", rate)

    def __len__(self):
        return self.t.size

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if self.t.size else 0.0

    def slice(self, start: int, stop: int) -> "GyroTrace":
        sl = slice(max(start, 0), stop)
        return GyroTrace(
            self.t[sl],
            self.x[sl],
            None if self.y is None else self.y[sl],
            None if self.z is None else self.z[sl],
            self.sample_rate_hz,
        )

    def index_at(self, time_s: float) -> int:
        """Index of the first sample at or after ``time_s`` (clamped)."""
        return int(min(np.searchsorted(self.t, time_s, side="left"), self.t.size - 1))


def load_trace(path: str | Path) -> GyroTrace:
    """Read a ``t,gx[,gy,gz]`` CSV; ``#`` comment lines may precede the header."""
    rows = []
    header = None
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or not "".join(row).strip():
                continue
            if header is None:
                if row[0].lstrip().startswith("#"):
                    continue
                header = [h.strip().lower() for h in row]
                for col in ("t", "gx"):
                    if col not in header:
                        raise TraceLoadError(f"{path}: missing column {col!r} in header")
                cols = [header.index(c) for c in ("t", "gx", "gy", "gz") if c in header]
                continue
            try:
                rows.append([float(row[i]) for i in cols])
            except (ValueError, IndexError):
                raise TraceLoadError(f"{path}: row {len(rows)} (line {lineno}): unparseable number") from None
    if header is None:
        raise TraceLoadError(f"{path}: missing header")
    if not rows:
        raise TraceLoadError(f"{path}: no samples")
    data = np.array(rows, dtype=np.float64)
    bad = np.flatnonzero(np.diff(data[:, 0]) <= 0)
    if bad.size:
        raise TraceLoadError(f"{path}: timestamps not increasing at row {bad[0] + 1}")
    extra = [data[:, i] for i in range(2, data.shape[1])]
    return GyroTrace(data[:, 0], data[:, 1], *(extra + [None] * (2 - len(extra))))


def save_trace(path: str | Path, trace: GyroTrace, comment: str | None = None) -> None:
    cols = [trace.t, trace.x]
    names = ["t", "gx"]
    if trace.y is not None and trace.z is not None:
        cols += [trace.y, trace.z]
        names += ["gy", "gz"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, np.column_stack(cols), delimiter=",", fmt="%.9g")


# --------------------------------------------------------------------------
# displacement features
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DisplacementFeatures:
    pos: float
    neg: float

    @property
    def summed(self) -> float:
        return self.pos + self.neg

    @property
    def total(self) -> float:
        return self.pos - self.neg

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.pos, self.neg, self.summed, self.total)

    def __add__(self, other: "DisplacementFeatures") -> "DisplacementFeatures":
        return DisplacementFeatures(self.pos + other.pos, self.neg + other.neg)


def integrate_displacement(trace: GyroTrace, window: tuple[int, int] | None = None) -> DisplacementFeatures:
    """Sign-split trapezoidal integral of ``x`` between two sample indices.

    ``window=(a, b)`` covers the time span ``t[a]..t[b]``, so windows that
    share an endpoint add up exactly. ``a == b`` gives zero features.
    """
    n = len(trace)
    a, b = (0, n - 1) if window is None else window
    if not (0 <= a <= b < max(n, 1)):
        raise IndexError(f"window {window} outside trace of {n} samples")
    if b == a:
        return DisplacementFeatures(0.0, 0.0)
    pos, neg = interval_contributions(trace.t[a : b + 1], trace.x[a : b + 1])
    return DisplacementFeatures(float(pos.sum()), float(neg.sum()))


class CumulativeDisplacement:
    """Prefix sums of interval contributions for O(1) window features."""

    def __init__(self, trace: GyroTrace):
        pos, neg = interval_contributions(trace.t, trace.x)
        self.t = trace.t
        self.pos = np.concatenate(([0.0], np.cumsum(pos)))
        self.neg = np.concatenate(([0.0], np.cumsum(neg)))

    def features(self, a, b) -> np.ndarray:
        """Feature rows ``(pos, neg, summed, total)`` for index spans ``a..b``."""
        a = np.asarray(a)
        b = np.asarray(b)
        p = self.pos[b] - self.pos[a]
        q = self.neg[b] - self.neg[a]
        return np.stack([p, q, p + q, p - q], axis=-1)


# --------------------------------------------------------------------------
# smoothing and peaks
# --------------------------------------------------------------------------


def gaussian_kernel(window: int) -> np.ndarray:
    if window < 3 or window % 2 == 0:
        raise ValueError(f"smoothing window must be odd and >= 3, got {window}")
    half = window // 2
    sigma = window / 6.0
    offs = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (offs / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(series, window: int = DEFAULT_SMOOTH_WINDOW) -> np.ndarray:
    """Truncated Gaussian moving filter (sigma = window/6).

    Near the edges the kernel is clipped to the available samples and
    renormalised, so constants pass through unchanged everywhere.
    """
    k = gaussian_kernel(window)
    s = np.asarray(series, dtype=np.float64)
    if s.size == 0:
        return s.copy()
    num = np.convolve(s, k, mode="full")
    den = np.convolve(np.ones_like(s), k, mode="full")
    half = window // 2
    return num[half : half + s.size] / den[half : half + s.size]


def find_top_peaks(series, k: int, min_separation: int = 1) -> np.ndarray:
    """Indices of the ``k`` highest local maxima, in chronological order.

    Maxima are taken greedily by descending height (lower index wins ties),
    skipping any within ``min_separation`` samples of one already chosen.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    s = np.asarray(series, dtype=np.float64)
    if s.size == 0:
        raise InsufficientPeaksError(f"insufficient peaks: wanted {k}, series is empty")
    # ignore rounding ripple on flat stretches
    floor = 1e-9 * max(1.0, float(np.max(np.abs(s))))
    cand, _ = find_peaks(s, prominence=floor)
    order = np.lexsort((cand, -s[cand]))
    chosen: list[int] = []
    for idx in cand[order]:
        if all(abs(int(idx) - c) >= min_separation for c in chosen):
            chosen.append(int(idx))
            if len(chosen) == k:
                return np.array(sorted(chosen), dtype=np.int64)
    raise InsufficientPeaksError(f"insufficient peaks: wanted {k}, found {len(chosen)} admissible")


def default_min_separation(trace: GyroTrace, seconds: float = DEFAULT_MIN_SEPARATION_S) -> int:
    return max(1, int(round(seconds * trace.sample_rate_hz)))
