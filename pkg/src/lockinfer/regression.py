"""Per-phase, per-sign linear models ``alpha = slope * theta + intercept``."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import stats

POSITIVE = "positive"
NEGATIVE = "negative"
AVERAGED = "averaged"
SIGNS = (POSITIVE, NEGATIVE)
STRATEGIES = (POSITIVE, NEGATIVE, AVERAGED)


class FitError(ValueError):
    pass


class NonInvertibleModel(ValueError):
    pass


@dataclass(frozen=True)
class LinearModel:
    slope: float
    intercept: float
    residual_sigma: float = 0.0

    def predict_alpha(self, theta):
        return self.slope * np.asarray(theta, dtype=np.float64) + self.intercept

    def invert(self, alpha):
        return predict_transition(self, alpha)


@dataclass(frozen=True)
class TrainingPair:
    phase: int
    sign: str
    theta: float
    alpha: float

    def __post_init__(self):
        if self.sign not in SIGNS:
            raise ValueError(f"sign must be one of {SIGNS}, got {self.sign!r}")
        if self.sign == POSITIVE and self.alpha < 0 or self.sign == NEGATIVE and self.alpha > 0:
            raise ValueError(f"alpha {self.alpha} inconsistent with sign {self.sign}")


def predict_transition(model: LinearModel, alpha):
    """Real-valued transition estimate; no rounding, no clamping."""
    if model.slope == 0:
        raise NonInvertibleModel("slope is zero")
    return (alpha - model.intercept) / model.slope


def ols_line(theta, alpha) -> tuple[float, float]:
    """Least-squares slope and intercept of alpha on theta."""
    x = np.asarray(theta, dtype=np.float64)
    y = np.asarray(alpha, dtype=np.float64)
    if np.unique(x).size < 2:
        raise FitError("need at least two distinct transitions")
    if x.shape != y.shape:
        raise FitError(f"theta and alpha lengths differ ({x.size} vs {y.size})")
    fit = stats.linregress(x, y)
    return float(fit.slope), float(fit.intercept)


def _sample_std(err) -> float:
    err = np.asarray(err, dtype=np.float64)
    return float(err.std(ddof=1)) if err.size > 1 else 0.0


def fit_linear_models(pairs: Iterable[TrainingPair]) -> dict[tuple[int, str], LinearModel]:
    groups: dict[tuple[int, str], list[TrainingPair]] = defaultdict(list)
    for p in pairs:
        groups[(p.phase, p.sign)].append(p)
    if not groups:
        raise FitError("no training pairs")
    models = {}
    for key in sorted(groups):
        grp = groups[key]
        theta = np.array([p.theta for p in grp])
        alpha = np.array([p.alpha for p in grp])
        try:
            slope, intercept = ols_line(theta, alpha)
        except FitError as exc:
            raise FitError(f"phase {key[0]} {key[1]}: {exc}") from None
        err = (alpha - intercept) / slope - theta
        models[key] = LinearModel(slope, intercept, _sample_std(err))
    return models


def strategy_sigmas(
    pairs: Iterable[TrainingPair], models: dict[tuple[int, str], LinearModel]
) -> dict[tuple[int, str], float]:
    """Inversion-error deviation (units) for each phase and strategy.

    The averaged strategy pairs the i-th positive and i-th negative sample of
    a phase in input order; both must carry the same transition.
    """
    pairs = list(pairs)
    out = {}
    phases = sorted({p.phase for p in pairs})
    for ph in phases:
        pos = [p for p in pairs if p.phase == ph and p.sign == POSITIVE]
        neg = [p for p in pairs if p.phase == ph and p.sign == NEGATIVE]
        if (ph, POSITIVE) in models:
            out[(ph, POSITIVE)] = models[(ph, POSITIVE)].residual_sigma
        if (ph, NEGATIVE) in models:
            out[(ph, NEGATIVE)] = models[(ph, NEGATIVE)].residual_sigma
        if pos and neg and len(pos) == len(neg):
            if any(a.theta != b.theta for a, b in zip(pos, neg)):
                continue
            mp, mn = models[(ph, POSITIVE)], models[(ph, NEGATIVE)]
            est = [
                0.5 * (predict_transition(mp, a.alpha) + predict_transition(mn, b.alpha))
                for a, b in zip(pos, neg)
            ]
            out[(ph, AVERAGED)] = _sample_std(np.array(est) - np.array([a.theta for a in pos]))
    return out


def load_training_pairs(path: str | Path) -> list[TrainingPair]:
    pairs = []
    with open(path, encoding="utf-8", newline="") as fh:
        rows = (r for r in fh if r.strip() and not r.lstrip().startswith("#"))
        reader = csv.DictReader(rows)
        missing = {"phase", "sign", "theta", "alpha"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for i, row in enumerate(reader):
            try:
                pairs.append(
                    TrainingPair(int(row["phase"]), row["sign"].strip(), float(row["theta"]), float(row["alpha"]))
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: row {i}: {exc}") from None
    return pairs


def save_training_pairs(path: str | Path, pairs: Iterable[TrainingPair]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phase", "sign", "theta", "alpha"])
        for p in pairs:
            w.writerow([p.phase, p.sign, repr(float(p.theta)), repr(float(p.alpha))])
