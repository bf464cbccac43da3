"""Labelled synthetic gyroscope traces built from an attack profile.

Each phase is a run of spins: a forward half-sine lobe followed by a shorter
reverse (regrab) lobe, ending in a slow sin^2 approach lobe and a short dwell
at zero velocity where the phase boundary sits. Lobe amplitudes are scaled
on the sample grid so the sign-split trapezoidal integral of every phase
equals the linear-model displacement targets exactly.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .attack import AttackProfile, published_profile
from .lockmodel import CombinationKey, LockSpec, key_to_transitions
from .recognition import DEFAULT_MIN_SPINS, learn_spin_profile
from .regression import NEGATIVE, POSITIVE, TrainingPair
from .signal import GyroTrace


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    sample_rate_hz: float = 200.0
    spin_advance: float = math.pi
    regrab_ratio: float = 0.9
    slowdown_seconds: float = 0.6
    lobe_speed: float = 1.0
    dwell_seconds: float = 0.1
    tail_fraction: float = 0.25
    jitter: float = 0.1
    noise_sigma: tuple[float, ...] | float = 0.0
    sensor_noise: float = 0.0
    lead_seconds: float = 0.0
    trail_seconds: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.regrab_ratio < 1:
            raise ValueError("regrab_ratio must lie in (0, 1)")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    def phase_noise(self, n_phases: int) -> tuple[float, ...]:
        s = self.noise_sigma
        if isinstance(s, (int, float)):
            return (float(s),) * n_phases
        if len(s) != n_phases:
            raise ValueError(f"noise_sigma needs {n_phases} entries")
        return tuple(float(v) for v in s)


@dataclass(frozen=True)
class GroundTruth:
    key: CombinationKey
    start: int
    theta: tuple[int, ...]
    theta_observed: tuple[float, ...]
    targets: tuple[tuple[float, float], ...]
    boundary_indices: tuple[int, ...]
    phase_boundaries: tuple[float, ...]
    phase_spans: tuple[tuple[int, int], ...]
    event_interval: tuple[float, float]
    spins: tuple[int, ...]


@dataclass(frozen=True)
class Label:
    kind: str  # "unlock" | "confuser"
    start_t: float
    end_t: float
    key: CombinationKey | None = None


# --------------------------------------------------------------------------
# waveform primitives
# --------------------------------------------------------------------------


def _lobe(n_samples: int, area: float, dt: float, shape: str) -> np.ndarray:
    """Interior samples of a single-signed lobe with exact trapezoid area.

    The lobe's two endpoint samples are zero and shared with neighbours, so
    the trapezoid integral reduces to ``dt * sum(interior)``.
    """
    n_samples = max(int(n_samples), 3)
    u = np.arange(1, n_samples) / n_samples
    base = np.sin(np.pi * u)
    if shape == "sin2":
        base = base**2
    return base * (area / (dt * base.sum()))


def _samples(seconds: float, rate: float, rng, jitter: float) -> int:
    if jitter:
        seconds *= 1.0 + jitter * rng.uniform(-1.0, 1.0)
    return max(3, int(round(seconds * rate)))


def _spin_count(theta: float, spec: LockSpec, spin_advance: float) -> int:
    angle = theta * 2.0 * math.pi / spec.dial_size
    return max(1, math.ceil(angle / spin_advance - 1e-9))


def _phase_targets(profile: AttackProfile, phase: int, theta: float) -> tuple[float, float]:
    pos = float(profile.model(phase, POSITIVE).predict_alpha(theta))
    neg = float(profile.model(phase, NEGATIVE).predict_alpha(theta))
    return pos, neg


def _phase_lobes(forward_sign, n_spins, pos_area, neg_area, cfg, rng, dt):
    """List of (sign, interior samples) for one phase, ending with the slow approach."""
    fwd_area, back_area = (pos_area, -neg_area) if forward_sign > 0 else (-neg_area, pos_area)
    weights = np.ones(n_spins + 1)
    weights[-1] = cfg.tail_fraction
    fwd_parts = fwd_area * weights / weights.sum()
    back_part = back_area / n_spins
    rate = cfg.sample_rate_hz
    lobes = []
    for s in range(n_spins):
        t_fwd = fwd_parts[s] / cfg.lobe_speed
        t_back = back_part / cfg.lobe_speed
        lobes.append((forward_sign, _lobe(_samples(t_fwd, rate, rng, cfg.jitter), fwd_parts[s], dt, "sine")))
        lobes.append((-forward_sign, _lobe(_samples(t_back, rate, rng, cfg.jitter), back_part, dt, "sine")))
    lobes.append((forward_sign, _lobe(_samples(cfg.slowdown_seconds, rate, rng, 0.0), fwd_parts[-1], dt, "sin2")))
    return lobes


def _draw_observed(theta, sigma, profile, phase, rng, tries=1000):
    """Noisy transition whose displacement targets keep their signs."""
    for _ in range(tries):
        obs = theta + (rng.normal(0.0, sigma) if sigma > 0 else 0.0)
        pos, neg = _phase_targets(profile, phase, obs)
        if pos > 0 and neg < 0:
            return obs, pos, neg
        if sigma <= 0:
            break
    raise GenerationError(
        f"phase {phase}: models give wrong-signed displacement targets at theta={theta}"
    )


def synthesize_unlock_trace(key, profile: AttackProfile, config: SynthConfig = SynthConfig(),
                            t0: float = 0.0, rng: np.random.Generator | None = None):
    """One unlock event and its ground truth."""
    spec = profile.spec
    key = spec.check_key(key)
    theta = key_to_transitions(key, profile.start, spec)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    rate = config.sample_rate_hz
    dt = 1.0 / rate
    noise = config.phase_noise(spec.n_phases)
    dwell = max(1, int(round(config.dwell_seconds * rate)))

    pieces = [np.zeros(max(0, int(round(config.lead_seconds * rate))) + 1)]
    n = pieces[0].size  # running sample count; last sample is a zero junction
    event_start = n - 1
    boundaries, observed, targets, spins = [], [], [], []
    for i, (th, ph) in enumerate(zip(theta, spec.phases), start=1):
        obs, pos, neg = _draw_observed(th, noise[i - 1], profile, i, rng)
        observed.append(obs)
        targets.append((pos, neg))
        n_sp = _spin_count(th, spec, config.spin_advance)
        spins.append(n_sp)
        for sign, interior in _phase_lobes(ph.sign, n_sp, pos, neg, config, rng, dt):
            pieces.append(sign * interior)
            pieces.append(np.zeros(1))
            n += interior.size + 1
        if i < spec.n_phases:
            pieces.append(np.zeros(dwell))
            boundaries.append(n - 1 + (dwell + 1) // 2)
            n += dwell
    event_end = n - 1
    tail = max(0, int(round(config.trail_seconds * rate)))
    pieces.append(np.zeros(tail))
    x = np.concatenate(pieces)
    if config.sensor_noise > 0:
        x = x + rng.normal(0.0, config.sensor_noise, x.size)
    t = t0 + np.arange(x.size) * dt
    edges = [0] + boundaries + [x.size - 1]
    gt = GroundTruth(
        key=key,
        start=profile.start,
        theta=tuple(theta),
        theta_observed=tuple(observed),
        targets=tuple(targets),
        boundary_indices=tuple(boundaries),
        phase_boundaries=tuple(float(t[b]) for b in boundaries),
        phase_spans=tuple(zip(edges[:-1], edges[1:])),
        event_interval=(float(t[event_start]), float(t[event_end])),
        spins=tuple(spins),
    )
    return GyroTrace(t, x, sample_rate_hz=rate), gt


def _confuser_burst(seconds, profile, cfg, rng, dt):
    """Alternating spin-like lobes with unlock-sized areas and no slowdown structure."""
    spec = profile.spec
    ph = int(rng.integers(1, spec.n_phases + 1))
    lo, hi = spec.phases[ph - 1].transition_min, spec.phases[ph - 1].transition_max
    th = rng.uniform(lo, hi)
    pos, neg = _phase_targets(profile, ph, th)
    n_sp = _spin_count(th, spec, cfg.spin_advance)
    per_pos, per_neg = pos / n_sp, neg / n_sp
    if per_pos <= 0 or per_neg >= 0:
        per_pos, per_neg = 1.5, -1.5
    out = [np.zeros(1)]
    total = 0.0
    sign = 1 if rng.random() < 0.5 else -1
    while total < seconds:
        area = per_pos if sign > 0 else -per_neg
        m = _samples(area / cfg.lobe_speed, cfg.sample_rate_hz, rng, cfg.jitter)
        out.append(sign * _lobe(m, area, dt, "sine"))
        out.append(np.zeros(1))
        total += m * dt
        sign = -sign
    return np.concatenate(out)


def synthesize_day_trace(
    events: Sequence[tuple[Sequence[int], float]],
    confuser_count: int,
    profile: AttackProfile,
    config: SynthConfig = SynthConfig(sample_rate_hz=50.0),
    duration_seconds: float = 86400.0,
    floor_sigma: float = 0.02,
    hard_confusers: bool = False,
    confuser_seconds: tuple[float, float] | None = None,
):
    """Long noise-floor stream with embedded unlocks and rotary confusers.

    Default confusers last 6-7 s (two or three spin windows); with
    ``hard_confusers`` they last 20-25 s so they pass ``min_spins``.
    Returns ``(trace, labels)``.
    """
    rng = np.random.default_rng(config.seed)
    rate = config.sample_rate_hz
    dt = 1.0 / rate
    n = int(round(duration_seconds * rate)) + 1
    x = rng.normal(0.0, floor_sigma, n) if floor_sigma > 0 else np.zeros(n)
    t = np.arange(n) * dt
    labels: list[Label] = []
    busy: list[tuple[float, float]] = []

    ev_cfg = replace(config, lead_seconds=0.0, trail_seconds=0.0, sensor_noise=0.0)
    for key, start_time in sorted(events, key=lambda e: e[1]):
        trace, gt = synthesize_unlock_trace(key, profile, ev_cfg, rng=rng)
        i0 = int(round(start_time * rate))
        if i0 + len(trace) > n:
            raise ValueError(f"event at {start_time}s runs past the end of the day trace")
        span = (t[i0], t[i0 + len(trace) - 1])
        if any(span[0] <= b and a <= span[1] for a, b in busy):
            raise ValueError(f"event at {start_time}s overlaps another event")
        x[i0 : i0 + len(trace)] += trace.x
        busy.append(span)
        labels.append(Label("unlock", float(span[0]), float(span[1]), gt.key))

    if confuser_seconds is None:
        confuser_seconds = (20.0, 25.0) if hard_confusers else (6.0, 7.0)
    guard = 120.0
    placed = 0
    while placed < confuser_count:
        secs = rng.uniform(*confuser_seconds)
        burst = _confuser_burst(secs, profile, config, rng, dt)
        i0 = int(rng.integers(0, n - burst.size))
        a, b = t[i0], t[i0 + burst.size - 1]
        if any(a - guard <= hi and lo <= b + guard for lo, hi in busy):
            continue
        x[i0 : i0 + burst.size] += burst
        busy.append((a, b))
        labels.append(Label("confuser", float(a), float(b)))
        placed += 1

    labels.sort(key=lambda lb: lb.start_t)
    return GyroTrace(t, x, sample_rate_hz=rate), labels


def write_labels(path, labels: Sequence[Label]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("event_start,event_end,key,kind\n")
        for lb in labels:
            fh.write(f"{lb.start_t:.6f},{lb.end_t:.6f},{'' if lb.key is None else lb.key},{lb.kind}\n")


def read_labels(path) -> list[Label]:
    out = []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            a, b, key, kind = (line.rstrip("\n").split(",") + [""])[:4]
            out.append(Label(kind or "unlock", float(a), float(b),
                             CombinationKey.parse(key) if key else None))
    return out


# --------------------------------------------------------------------------
# training data and calibrated profiles
# --------------------------------------------------------------------------


def random_keys(spec: LockSpec, count: int, rng: np.random.Generator) -> list[CombinationKey]:
    return [CombinationKey(rng.integers(0, spec.dial_size, spec.n_phases)) for _ in range(count)]


def covering_keys(spec: LockSpec, start: int = 0) -> list[CombinationKey]:
    """``dial_size`` keys that together use every transition of every phase.

    Key ``j`` takes the ``j``-th transition of each range, so the set covers
    all ``n_phases * dial_size`` transitions.
    """
    from .lockmodel import transitions_to_key

    return [
        transitions_to_key([ph.transition_min + j for ph in spec.phases], start, spec)
        for j in range(spec.dial_size)
    ]


def synthesize_training_pairs(profile: AttackProfile, keys, config: SynthConfig = SynthConfig(),
                              use_segmentation: bool = True) -> list[TrainingPair]:
    """Displacement/transition pairs measured from synthetic unlocks."""
    from .segmentation import segment_phases
    from .signal import integrate_displacement

    rng = np.random.default_rng(config.seed)
    pairs = []
    for key in keys:
        trace, gt = synthesize_unlock_trace(key, profile, config, rng=rng)
        if use_segmentation:
            feats = segment_phases(trace, profile.spec).features
        else:
            feats = [integrate_displacement(trace, s) for s in gt.phase_spans]
        for i, (th, f) in enumerate(zip(gt.theta, feats), start=1):
            pairs.append(TrainingPair(i, POSITIVE, float(th), f.pos))
        for i, (th, f) in enumerate(zip(gt.theta, feats), start=1):
            pairs.append(TrainingPair(i, NEGATIVE, float(th), f.neg))
    return pairs


def learn_profile_spins(profile: AttackProfile, n_traces: int = 40, config: SynthConfig = SynthConfig(),
                        seed: int = 0):
    rng = np.random.default_rng(seed)
    labeled = []
    for key in random_keys(profile.spec, n_traces, rng):
        trace, gt = synthesize_unlock_trace(key, profile, config, rng=rng)
        labeled.append((trace, [gt.event_interval]))
    return learn_spin_profile(labeled, min_spins=DEFAULT_MIN_SPINS.get(profile.spec.name, 5))


@functools.lru_cache(maxsize=8)
def calibrated_profile(spec: LockSpec, start: int = 0, sample_rate_hz: float = 200.0,
                       seed: int = 0) -> AttackProfile:
    """Published models plus a spin profile learned from synthetic unlocks."""
    base = published_profile(spec, start)
    spin = learn_profile_spins(base, config=SynthConfig(sample_rate_hz=sample_rate_hz), seed=seed)
    return base.with_spin_profile(spin)
