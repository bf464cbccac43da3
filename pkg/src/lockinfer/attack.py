"""Key inference: deterministic inversion and probabilistic top-r ranking."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .kernels import gaussian_logpdf
from .lockmodel import (
    PADLOCK,
    SAFE,
    BUILTIN_SPECS,
    CombinationKey,
    KeySet,
    LockSpec,
    get_spec,
    keys_to_transitions_array,
    lex_index,
    spec_from_dict,
    spec_to_dict,
    transitions_to_key,
    transitions_to_keys_array,
)
from .recognition import SpinProfile
from .regression import AVERAGED, NEGATIVE, POSITIVE, STRATEGIES, LinearModel, predict_transition
from .signal import DisplacementFeatures

SCHEMA_VERSION = 1
SIGMA_FLOOR = 0.5
EXHAUSTIVE_GUARD = 10**7


class ConfigurationError(ValueError):
    pass


class SchemaError(ValueError):
    pass


class KeySpaceTooLarge(ValueError):
    pass


# Published least-squares fits (slope, intercept) keyed by (phase, sign).
PADLOCK_MODELS = {
    (1, POSITIVE): (0.0836, 0.3272),
    (1, NEGATIVE): (-0.1269, 0.3714),
    (2, POSITIVE): (0.0854, 0.9360),
    (2, NEGATIVE): (-0.1163, 0.3301),
    (3, POSITIVE): (0.0737, 2.0387),
    (3, NEGATIVE): (-0.1173, 0.0061),
}
SAFE_MODELS = {
    (1, POSITIVE): (0.0153, 19.5492),
    (1, NEGATIVE): (-0.0266, -8.8471),
    (2, POSITIVE): (0.0010, 7.9046),
    (2, NEGATIVE): (-0.0386, -2.3798),
    (3, POSITIVE): (0.0170, 3.6319),
    (3, NEGATIVE): (-0.0460, 0.4906),
    (4, POSITIVE): (0.0305, 1.7663),
    (4, NEGATIVE): (-0.0483, -0.1058),
}
# lowest-error strategy per phase and its inference-error deviation (units)
PADLOCK_STRATEGY = (AVERAGED, AVERAGED, NEGATIVE)
PADLOCK_SIGMA = (12.27, 8.49, 4.82)
SAFE_STRATEGY = (AVERAGED, POSITIVE, NEGATIVE, NEGATIVE)
SAFE_SIGMA = (22.99, 17.86, 8.66, 7.23)


@dataclass(frozen=True)
class AttackProfile:
    spec: LockSpec
    models: dict
    strategy: tuple[str, ...]
    sigmas: dict = field(default_factory=dict)
    spin_profile: SpinProfile | None = None
    start: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strategy", tuple(self.strategy))
        if len(self.strategy) != self.spec.n_phases:
            raise ConfigurationError("need one strategy per phase")
        for s in self.strategy:
            if s not in STRATEGIES:
                raise ConfigurationError(f"unknown strategy {s!r}")
        self.spec.check_start(self.start)

    def model(self, phase: int, sign: str) -> LinearModel:
        try:
            return self.models[(phase, sign)]
        except KeyError:
            raise ConfigurationError(f"no {sign} model for phase {phase}") from None

    def sigma(self, phase: int, strategy: str | None = None) -> float:
        """Scoring deviation for a phase, floored at :data:`SIGMA_FLOOR`."""
        strategy = strategy or self.strategy[phase - 1]
        s = self.sigmas.get((phase, strategy))
        if s is None:
            signs = (POSITIVE, NEGATIVE) if strategy == AVERAGED else (strategy,)
            s = max(self.model(phase, sg).residual_sigma for sg in signs)
        return max(float(s), SIGMA_FLOOR)

    def with_strategy(self, strategy: Sequence[str]) -> "AttackProfile":
        return replace(self, strategy=tuple(strategy))

    def with_spin_profile(self, spin: SpinProfile) -> "AttackProfile":
        return replace(self, spin_profile=spin)

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        phases = []
        for i in range(1, self.spec.n_phases + 1):
            entry = {"phase": i, "strategy": self.strategy[i - 1], "models": {}, "sigma": {}}
            for sign in (POSITIVE, NEGATIVE):
                m = self.models.get((i, sign))
                if m is not None:
                    entry["models"][sign] = {
                        "slope": m.slope, "intercept": m.intercept, "residual_sigma": m.residual_sigma,
                    }
            for strat in STRATEGIES:
                if (i, strat) in self.sigmas:
                    entry["sigma"][strat] = self.sigmas[(i, strat)]
            phases.append(entry)
        return {
            "schema_version": SCHEMA_VERSION,
            "spec": self.spec.name,
            "lock": None if self.spec.name in BUILTIN_SPECS and BUILTIN_SPECS[self.spec.name] == self.spec
            else spec_to_dict(self.spec),
            "start": self.start,
            "phases": phases,
            "spin_profile": None if self.spin_profile is None else self.spin_profile.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackProfile":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError(
                f"profile schema_version {d.get('schema_version')!r} != supported {SCHEMA_VERSION}"
            )
        spec = spec_from_dict(d["lock"]) if d.get("lock") else get_spec(d["spec"])
        models, sigmas, strategy = {}, {}, []
        for entry in sorted(d["phases"], key=lambda e: e["phase"]):
            i = int(entry["phase"])
            strategy.append(entry["strategy"])
            for sign, m in entry.get("models", {}).items():
                models[(i, sign)] = LinearModel(float(m["slope"]), float(m["intercept"]),
                                                float(m.get("residual_sigma", 0.0)))
            for strat, s in entry.get("sigma", {}).items():
                sigmas[(i, strat)] = float(s)
        spin = d.get("spin_profile")
        return cls(spec, models, tuple(strategy), sigmas,
                   None if spin is None else SpinProfile.from_dict(spin), int(d.get("start", 0)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AttackProfile":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def published_profile(spec: LockSpec, start: int = 0) -> AttackProfile:
    """Published linear fits with the lowest-error strategy per phase.

    No spin profile is attached; see :func:`lockinfer.synth.calibrated_profile`.
    """
    if spec == PADLOCK:
        table, strategy, sig = PADLOCK_MODELS, PADLOCK_STRATEGY, PADLOCK_SIGMA
    elif spec == SAFE:
        table, strategy, sig = SAFE_MODELS, SAFE_STRATEGY, SAFE_SIGMA
    else:
        raise ConfigurationError(f"no published models for lock {spec.name!r}")
    models = {k: LinearModel(m, n, sig[k[0] - 1]) for k, (m, n) in table.items()}
    sigmas = {(i + 1, s): v for i, (s, v) in enumerate(zip(strategy, sig))}
    return AttackProfile(spec, models, strategy, sigmas, None, start)


# --------------------------------------------------------------------------
# deterministic inference
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TransitionEstimate:
    theta_bar: tuple[float, ...]
    rounded: tuple[int, ...]
    clamped: tuple[bool, ...]


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def clamp_transition(theta_bar: float, phase_spec) -> tuple[int, bool]:
    r = round_half_up(theta_bar)
    c = min(max(r, phase_spec.transition_min), phase_spec.transition_max)
    return c, c != r


def infer_transition(features: DisplacementFeatures, phase: int, profile: AttackProfile,
                     strategy: str | None = None) -> float:
    """Unrounded transition estimate for one phase (1-based)."""
    strategy = strategy or profile.strategy[phase - 1]
    if strategy == POSITIVE:
        return float(predict_transition(profile.model(phase, POSITIVE), features.pos))
    if strategy == NEGATIVE:
        return float(predict_transition(profile.model(phase, NEGATIVE), features.neg))
    up = predict_transition(profile.model(phase, POSITIVE), features.pos)
    down = predict_transition(profile.model(phase, NEGATIVE), features.neg)
    return float(0.5 * (up + down))


def estimate_transitions(features: Sequence[DisplacementFeatures], profile: AttackProfile,
                         strategy: Sequence[str] | None = None) -> TransitionEstimate:
    spec = profile.spec
    if len(features) != spec.n_phases:
        raise ConfigurationError(f"expected {spec.n_phases} phase features, got {len(features)}")
    strategy = tuple(strategy or profile.strategy)
    bars, rounded, clamped = [], [], []
    for i, (f, ph) in enumerate(zip(features, spec.phases), start=1):
        tb = infer_transition(f, i, profile, strategy[i - 1])
        c, was = clamp_transition(tb, ph)
        bars.append(tb)
        rounded.append(c)
        clamped.append(was)
    return TransitionEstimate(tuple(bars), tuple(rounded), tuple(clamped))


def infer_key_deterministic(segments, profile: AttackProfile) -> tuple[CombinationKey, TransitionEstimate]:
    """Round and clamp each phase estimate, then apply the key formula.

    ``segments`` is a :class:`~lockinfer.segmentation.PhaseSegments` or a
    plain sequence of :class:`DisplacementFeatures`.
    """
    feats = getattr(segments, "features", segments)
    est = estimate_transitions(feats, profile)
    return transitions_to_key(est.rounded, profile.start, profile.spec), est


# --------------------------------------------------------------------------
# probabilistic ranking
# --------------------------------------------------------------------------


def score_transition_candidates(theta_bar: float, sigma: float, phase) -> np.ndarray:
    """Gaussian log-density at every integer transition of the phase range."""
    return gaussian_logpdf(phase.candidates(), theta_bar, max(sigma, SIGMA_FLOOR))


def phase_scores(estimate: TransitionEstimate, profile: AttackProfile) -> list[np.ndarray]:
    """Per-phase log-scores centred on the unclamped estimates."""
    return [
        score_transition_candidates(tb, profile.sigma(i), ph)
        for i, (tb, ph) in enumerate(zip(estimate.theta_bar, profile.spec.phases), start=1)
    ]


@dataclass(frozen=True, eq=False)
class RankedKeyList:
    keys: np.ndarray  # (M, P) digits
    scores: np.ndarray  # (M,) log-scores, non-increasing
    key_space_size: int

    def __len__(self):
        return self.keys.shape[0]

    @property
    def entries(self) -> list[tuple[CombinationKey, float]]:
        return [(CombinationKey(k), float(s)) for k, s in zip(self.keys.tolist(), self.scores)]

    def top(self, r: int) -> "RankedKeyList":
        return RankedKeyList(self.keys[:r], self.scores[:r], self.key_space_size)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("rank,key,log_score\n")
            for i, (k, s) in enumerate(zip(self.keys.tolist(), self.scores), start=1):
                fh.write(f"{i},{'-'.join(map(str, k))},{s:.12g}\n")


def _member_transitions(key_set: KeySet, start: int) -> np.ndarray:
    return keys_to_transitions_array(key_set.as_array(), start, key_set.spec)


def rank_keys_exhaustive(scores: Sequence[np.ndarray], spec: LockSpec, start: int = 0,
                         key_set: KeySet | None = None) -> RankedKeyList:
    """Score every key of the space (or set) and sort.

    Ties are ordered by ascending key digits. Refuses spaces above
    :data:`EXHAUSTIVE_GUARD` entries.
    """
    size = spec.key_space_size if key_set is None else len(key_set)
    if size > EXHAUSTIVE_GUARD:
        raise KeySpaceTooLarge(f"{size} keys exceeds exhaustive guard {EXHAUSTIVE_GUARD}; use rank_keys_lazy")
    if key_set is None:
        axes = [ph.candidates() for ph in spec.phases]
        theta = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.n_phases)
    else:
        theta = _member_transitions(key_set, start)
    idx = theta - np.array([ph.transition_min for ph in spec.phases])
    total = scores[0][idx[:, 0]]
    for p in range(1, spec.n_phases):
        total = total + scores[p][idx[:, p]]
    keys = transitions_to_keys_array(theta, start, spec)
    order = np.lexsort((lex_index(keys, spec.dial_size), -total))
    return RankedKeyList(keys[order], total[order], size)


def rank_keys_lazy(scores: Sequence[np.ndarray], spec: LockSpec, r: int, start: int = 0,
                   key_set: KeySet | None = None) -> RankedKeyList:
    """Top-``r`` keys by best-first search over the per-phase product.

    Each phase's candidates are sorted by descending score; the frontier
    holds index tuples keyed by (-total, key digits), and each pop pushes the
    tuple's one-step successors. All tuples sharing the popped total are
    drained before emitting so equal-score keys come out in digit order.
    With ``key_set`` only member keys are emitted. Memory stays proportional
    to the number of keys visited, never the whole space.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    P = spec.n_phases
    size = spec.key_space_size if key_set is None else len(key_set)
    order = [np.lexsort((np.arange(len(s)), -np.asarray(s))) for s in scores]
    sorted_scores = [np.asarray(s, dtype=np.float64)[o].tolist() for s, o in zip(scores, order)]
    sorted_theta = [(ph.candidates()[o]).tolist() for ph, o in zip(spec.phases, order)]
    lens = [len(s) for s in sorted_scores]
    n = spec.dial_size
    signs = [ph.sign for ph in spec.phases]
    members = key_set.keys if key_set is not None else None

    def total_of(idx):
        s = sorted_scores[0][idx[0]]
        for p in range(1, P):
            s += sorted_scores[p][idx[p]]
        return s

    def key_of(idx):
        pos = start
        digits = []
        for p in range(P):
            pos = (pos + signs[p] * sorted_theta[p][idx[p]]) % n
            digits.append(pos)
        return tuple(digits)

    first = (0,) * P
    heap = [(-total_of(first), key_of(first), first)]
    seen = {first}
    out_keys: list[tuple] = []
    out_scores: list[float] = []

    def push_successors(idx):
        for p in range(P):
            if idx[p] + 1 < lens[p]:
                nxt = idx[:p] + (idx[p] + 1,) + idx[p + 1 :]
                if nxt not in seen:
                    seen.add(nxt)
                    heapq.heappush(heap, (-total_of(nxt), key_of(nxt), nxt))

    while heap and len(out_keys) < r:
        neg, key, idx = heapq.heappop(heap)
        batch = [key]
        push_successors(idx)
        while heap and heap[0][0] == neg:
            _, k2, i2 = heapq.heappop(heap)
            batch.append(k2)
            push_successors(i2)
        batch.sort()
        for k in batch:
            if members is None or k in members:
                out_keys.append(k)
                out_scores.append(-neg)
                if len(out_keys) == r:
                    break

    keys = np.array(out_keys, dtype=np.int64).reshape(-1, P)
    return RankedKeyList(keys, np.array(out_scores, dtype=np.float64), size)


def rank_of_truth(ranked: RankedKeyList, truth) -> int | None:
    """1-based position of ``truth`` or ``None`` when absent."""
    hit = np.flatnonzero(np.all(ranked.keys == np.asarray(tuple(truth)), axis=1))
    return int(hit[0]) + 1 if hit.size else None


def rank_observation(features: Sequence[DisplacementFeatures], profile: AttackProfile, r: int,
                     key_set: KeySet | None = None) -> tuple[RankedKeyList, TransitionEstimate]:
    est = estimate_transitions(features, profile)
    ranked = rank_keys_lazy(phase_scores(est, profile), profile.spec, r, profile.start, key_set)
    return ranked, est
