"""Ranking metrics, Monte Carlo top-r curves, error statistics and t-tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from . import kernels
from .attack import SIGMA_FLOOR
from .lockmodel import (
    KeySet,
    LockSpec,
    combination_length,
    keys_to_transitions_array,
    lex_index,
    transitions_to_keys_array,
)

NOISE_CONSTANT = "constant"
# deviation grows with the excess transition (theta - transition_min + 1),
# scaled so its RMS over the phase range equals the stated deviation
NOISE_EXCESS = "excess"
NOISE_MODELS = (NOISE_CONSTANT, NOISE_EXCESS)

LENGTH_THRESHOLD = 150


class MetricError(ValueError):
    """A metric is undefined for the given input."""


class DegenerateTestError(MetricError):
    pass


def success_at_r(ranks: Sequence[int | None], r: int) -> float:
    """Fraction of ranks at or below ``r``; ``None`` counts as a miss."""
    if r < 1:
        raise ValueError("r must be >= 1")
    ranks = list(ranks)
    if not ranks:
        raise MetricError("success rate of an empty rank list is undefined")
    return sum(1 for k in ranks if k is not None and k <= r) / len(ranks)


def improvement_factor(rate: float, r: int, space: int) -> float:
    if r <= 0:
        raise ValueError("r must be positive")
    if r > space:
        raise ValueError(f"r={r} exceeds key space size {space}")
    return rate / (r / space)


@dataclass(frozen=True)
class TopRCurve:
    r_values: tuple[int, ...]
    success_rate: tuple[float, ...]
    improvement_factor: tuple[float, ...]
    key_space_size: int
    trials: int

    @classmethod
    def from_ranks(cls, ranks: Sequence[int | None], r_values: Iterable[int], key_space_size: int):
        rs = tuple(sorted({int(r) for r in r_values if r <= key_space_size}))
        rates = tuple(success_at_r(ranks, r) for r in rs)
        factors = tuple(improvement_factor(s, r, key_space_size) for s, r in zip(rates, rs))
        return cls(rs, rates, factors, int(key_space_size), len(ranks))

    def at(self, r: int) -> tuple[float, float]:
        i = self.r_values.index(r)
        return self.success_rate[i], self.improvement_factor[i]

    def rows(self):
        return list(zip(self.r_values, self.success_rate, self.improvement_factor))

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("r,success_rate,improvement_factor\n")
            for r, s, f in self.rows():
                fh.write(f"{r},{s:.10g},{f:.10g}\n")


def default_r_values(space: int) -> list[int]:
    """1, 2, 5, 10, 20, 50, ... up to the key space size."""
    out, base = [], 1
    while base <= space:
        out.extend(v for v in (base, 2 * base, 5 * base) if v <= space)
        base *= 10
    if out[-1] != space:
        out.append(space)
    return out


# --------------------------------------------------------------------------
# Monte Carlo replication of top-r success curves
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RankingSpace:
    """Candidate tables for the rank kernel.

    ``theta`` holds each member key's transitions, ``cand[p]`` the distinct
    transitions of phase ``p`` (padded to equal width by repetition) and
    ``members[m, p]`` the column of member ``m``'s transition in ``cand[p]``.
    """

    spec: LockSpec
    theta: np.ndarray
    keys: np.ndarray
    cand: np.ndarray
    members: np.ndarray
    lexrank: np.ndarray
    label: str

    @property
    def size(self) -> int:
        return self.theta.shape[0]

    @classmethod
    def from_transitions(cls, spec: LockSpec, theta: np.ndarray, start: int, label: str):
        theta = np.asarray(theta, dtype=np.int64)
        keys = transitions_to_keys_array(theta, start, spec)
        cols, members = [], np.empty_like(theta)
        for p in range(spec.n_phases):
            uniq, inv = np.unique(theta[:, p], return_inverse=True)
            cols.append(uniq)
            members[:, p] = inv
        width = max(len(c) for c in cols)
        cand = np.stack([np.pad(c, (0, width - len(c)), mode="edge") for c in cols]).astype(np.float64)
        return cls(spec, theta, keys, cand, members, lex_index(keys, spec.dial_size), label)

    @classmethod
    def full(cls, spec: LockSpec, start: int = 0):
        axes = [ph.candidates() for ph in spec.phases]
        theta = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.n_phases)
        return cls.from_transitions(spec, theta, start, "full")

    @classmethod
    def from_key_set(cls, key_set: KeySet, start: int = 0):
        theta = keys_to_transitions_array(key_set.as_array(), start, key_set.spec)
        return cls.from_transitions(key_set.spec, theta, start, key_set.provenance)


def draw_observations(theta_true: np.ndarray, sigma: Sequence[float], spec: LockSpec,
                      rng: np.random.Generator, noise_model: str = NOISE_CONSTANT) -> np.ndarray:
    """Noisy unrounded estimates ``theta_true + N(0, s^2)`` per phase."""
    theta_true = np.asarray(theta_true, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    z = rng.standard_normal(theta_true.shape)
    if noise_model == NOISE_CONSTANT:
        scale = np.broadcast_to(sigma, theta_true.shape)
    elif noise_model == NOISE_EXCESS:
        base = np.array([ph.transition_min - 1 for ph in spec.phases], dtype=np.float64)
        n = spec.dial_size
        rms = math.sqrt((n + 1) * (2 * n + 1) / 6.0)
        scale = sigma / rms * (theta_true - base)
    else:
        raise ValueError(f"unknown noise model {noise_model!r}; choose from {NOISE_MODELS}")
    return theta_true + scale * z


def _split_sum_ranks(spec: LockSpec, theta_bar: np.ndarray, sigma: np.ndarray, truth_theta: np.ndarray):
    """Ranks in the full product space without enumerating it.

    Phases are split into two halves; each half's score sums are sorted and
    the keys scoring strictly above the truth are counted by binary search.
    Exact float ties are not broken lexicographically here, which only
    matters on a measure-zero set of continuous observations.
    """
    P = spec.n_phases
    h = P // 2
    cands = [ph.candidates().astype(np.float64) for ph in spec.phases]
    ranks = np.empty(theta_bar.shape[0], dtype=np.int64)
    for t in range(theta_bar.shape[0]):
        tab = [kernels.gaussian_logpdf(cands[p], theta_bar[t, p], sigma[p]) for p in range(P)]
        left = tab[0]
        for p in range(1, h):
            left = np.add.outer(left, tab[p]).ravel()
        right = tab[h]
        for p in range(h + 1, P):
            right = np.add.outer(right, tab[p]).ravel()
        idx = [int(truth_theta[t, p] - spec.phases[p].transition_min) for p in range(P)]
        # score the truth through the same half sums so it never outranks itself
        li = ri = 0
        for p in range(h):
            li = li * tab[p].size + idx[p]
        for p in range(h, P):
            ri = ri * tab[p].size + idx[p]
        ts = left[li] + right[ri]
        right = np.sort(right)
        # keys with left + right > ts; entries within rounding distance of
        # the threshold are re-checked with the exact comparison
        thr = ts - left
        eps = 1e-9 * max(1.0, abs(ts))
        lo = np.searchsorted(right, thr - eps, side="left")
        hi = np.searchsorted(right, thr + eps, side="right")
        above = int((right.size - hi).sum())
        for j in np.nonzero(hi > lo)[0]:
            above += int(np.count_nonzero(left[j] + right[lo[j]:hi[j]] > ts))
        ranks[t] = above + 1
    return ranks


def monte_carlo_topr(
    spec: LockSpec,
    sigma: Sequence[float],
    key_space: str | KeySet | RankingSpace = "full",
    trials: int = 10_000,
    r_values: Iterable[int] | None = None,
    seed: int = 0,
    noise_model: str = NOISE_CONSTANT,
    start: int = 0,
    return_details: bool = False,
):
    """Top-r success curve for Gaussian-error observations.

    Each trial draws a true key uniformly from ``key_space`` ("full",
    "grid", a :class:`KeySet` or a prepared :class:`RankingSpace`), perturbs
    its transitions and ranks every member by Gaussian log-score using
    ``sigma`` (floored). With ``return_details`` the per-trial true keys,
    observations and ranks are returned alongside the curve.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (spec.n_phases,):
        raise ValueError(f"need {spec.n_phases} deviations, got {sigma.shape}")
    if np.any(sigma < 0):
        raise ValueError("deviations must be >= 0")
    score_sigma = np.maximum(sigma, SIGMA_FLOOR)
    rng = np.random.default_rng(seed)

    space = _resolve_space(spec, key_space, start)
    if space is None:
        # full space too large to tabulate member by member
        size = spec.key_space_size
        theta_true = np.column_stack([
            rng.integers(ph.transition_min, ph.transition_max + 1, trials) for ph in spec.phases
        ])
        theta_bar = draw_observations(theta_true, sigma, spec, rng, noise_model)
        ranks = _split_sum_ranks(spec, theta_bar, score_sigma, theta_true)
        keys = transitions_to_keys_array(theta_true, start, spec)
    else:
        size = space.size
        truth = rng.integers(0, size, trials)
        theta_true = space.theta[truth]
        theta_bar = draw_observations(theta_true, sigma, spec, rng, noise_model)
        ranks = kernels.mc_ranks(theta_bar, score_sigma, space.cand, space.members, space.lexrank, truth)
        keys = space.keys[truth]

    curve = TopRCurve.from_ranks(ranks.tolist(), r_values or default_r_values(size), size)
    if return_details:
        return curve, MonteCarloDetails(keys, theta_true, theta_bar, ranks)
    return curve


@dataclass(frozen=True, eq=False)
class MonteCarloDetails:
    keys: np.ndarray
    theta_true: np.ndarray
    theta_bar: np.ndarray
    ranks: np.ndarray

    def successful_keys(self, r: int) -> np.ndarray:
        return self.keys[self.ranks <= r]


# full spaces up to this many keys are tabulated member by member
_TABULATE_LIMIT = 2_000_000


def _resolve_space(spec: LockSpec, key_space, start: int) -> RankingSpace | None:
    from .lockmodel import grid_key_set

    if isinstance(key_space, RankingSpace):
        return key_space
    if isinstance(key_space, KeySet):
        if key_space.spec != spec:
            raise ValueError("key set belongs to a different lock")
        return RankingSpace.from_key_set(key_space, start)
    if key_space == "full":
        if spec.key_space_size <= _TABULATE_LIMIT:
            return RankingSpace.full(spec, start)
        return None
    if key_space == "grid":
        return RankingSpace.from_key_set(grid_key_set(spec, start=start), start)
    raise ValueError(f"unknown key space {key_space!r}")


# --------------------------------------------------------------------------
# error statistics
# --------------------------------------------------------------------------


def phase_error_deviations(predicted, truth) -> np.ndarray | dict:
    """Sample deviation of ``predicted - truth`` per phase.

    ``predicted`` is an ``(n, P)`` array of unrounded estimates, or a mapping
    from strategy name to such an array; the result mirrors that shape.
    """
    if isinstance(predicted, Mapping):
        return {k: phase_error_deviations(v, truth) for k, v in predicted.items()}
    pred = np.asarray(predicted, dtype=np.float64)
    true = np.asarray(truth, dtype=np.float64)
    if pred.shape != true.shape:
        raise ValueError(f"prediction shape {pred.shape} != truth shape {true.shape}")
    if pred.ndim != 2 or pred.shape[0] < 2:
        raise MetricError("need at least two observations per phase")
    return (pred - true).std(axis=0, ddof=1)


def length_analysis(keys, spec: LockSpec, start: int = 0, threshold: int = LENGTH_THRESHOLD) -> float:
    """Fraction of ``keys`` whose total transition count is below ``threshold``."""
    keys = np.asarray(keys, dtype=np.int64).reshape(-1, spec.n_phases)
    if keys.shape[0] == 0:
        raise MetricError("length analysis of an empty key list is undefined")
    lengths = keys_to_transitions_array(keys, start, spec).sum(axis=1)
    return float(np.count_nonzero(lengths < threshold) / keys.shape[0])


def key_length(key, spec: LockSpec, start: int = 0) -> int:
    return combination_length(key, start, spec)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-tailed paired t-test on ``a - b``.

    Identical samples give ``t = 0, p = 1``; differences that are constant
    but non-zero have no spread to test against and raise
    :class:`DegenerateTestError`.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples need equal 1-D shapes, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    df = n - 1
    if np.all(d == 0):
        return TTestResult(0.0, 1.0, df)
    sd = d.std(ddof=1)
    if sd == 0 or not np.isfinite(sd):
        raise DegenerateTestError("differences have zero variance")
    t = float(d.mean() / (sd / math.sqrt(n)))
    p = float(min(1.0, 2.0 * stats.t.sf(abs(t), df)))
    return TTestResult(t, p, df)


def read_columns(path, columns: Sequence[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Two numeric columns from a headed CSV (first two unless named)."""
    import csv

    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if len(rows) < 2:
        raise MetricError(f"{path}: need a header and at least one data row")
    header = [h.strip() for h in rows[0]]
    if columns is None:
        if len(header) < 2:
            raise MetricError(f"{path}: need two columns")
        idx = (0, 1)
    else:
        try:
            idx = tuple(header.index(c) for c in columns)
        except ValueError:
            raise MetricError(f"{path}: columns {list(columns)} not all in header {header}") from None
    out = ([], [])
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            for j, i in enumerate(idx):
                out[j].append(float(row[i]))
        except (ValueError, IndexError):
            raise MetricError(f"{path}:{lineno}: unparseable row {row}") from None
    return np.array(out[0]), np.array(out[1])


# --------------------------------------------------------------------------
# recognition scoring
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectionScore:
    true_positives: int
    false_positives: int
    missed: int
    recall: float
    precision: float


def _overlaps(a0, a1, b0, b1) -> bool:
    return a0 < b1 and b0 < a1


def score_detections(detections: Sequence, labels: Sequence, kind: str = "unlock") -> DetectionScore:
    """Match detections (anything with ``start_t``/``end_t``) to labels of ``kind``.

    A detection is a true positive when it overlaps a labelled interval of
    that kind; a label is recalled when any detection overlaps it.
    """
    targets = [l for l in labels if l.kind == kind]
    tp = sum(1 for d in detections if any(_overlaps(d.start_t, d.end_t, l.start_t, l.end_t) for l in targets))
    fp = len(detections) - tp
    hit = sum(1 for l in targets if any(_overlaps(d.start_t, d.end_t, l.start_t, l.end_t) for d in detections))
    recall = hit / len(targets) if targets else float("nan")
    precision = tp / len(detections) if detections else float("nan")
    return DetectionScore(tp, fp, len(targets) - hit, recall, precision)
