"""Rotary combination-lock arithmetic.

A key is entered as a sequence of directional sweeps ("phases"). The number
of dial units traversed in a phase is its *transition*. Counter-clockwise
turns raise the dial reading, clockwise turns lower it::

    digit_i = (digit_{i-1} + sign_i * theta_i) mod dial_size

with ``digit_0`` the known start position. Each phase's transition range has
width ``dial_size``, so for a fixed start the mapping between keys and
in-range transition vectors is a bijection.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CW = "clockwise"
CCW = "counterclockwise"
_SIGN = {CW: -1, CCW: +1}


class LockError(ValueError):
    """Invalid key, transition, start position or key-list content."""


@dataclass(frozen=True)
class PhaseSpec:
    direction: str
    transition_min: int
    transition_max: int

    def __post_init__(self):
        if self.direction not in _SIGN:
            raise LockError(f"unknown direction {self.direction!r}")
        if not 1 <= self.transition_min <= self.transition_max:
            raise LockError("need 1 <= transition_min <= transition_max")

    @property
    def sign(self) -> int:
        return _SIGN[self.direction]

    @property
    def width(self) -> int:
        return self.transition_max - self.transition_min + 1

    def candidates(self) -> np.ndarray:
        return np.arange(self.transition_min, self.transition_max + 1)

    def contains(self, theta) -> bool:
        return self.transition_min <= theta <= self.transition_max


@dataclass(frozen=True)
class LockSpec:
    name: str
    dial_size: int
    phases: tuple[PhaseSpec, ...]
    start_default: int = 0

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if self.dial_size < 2:
            raise LockError("dial_size must be >= 2")
        if not self.phases:
            raise LockError("a lock needs at least one phase")
        for a, b in zip(self.phases, self.phases[1:]):
            if a.direction == b.direction:
                raise LockError("consecutive phases must alternate direction")
        for ph in self.phases:
            if ph.width != self.dial_size:
                raise LockError("each phase range must span exactly dial_size units")
            if (ph.transition_min - 1) % self.dial_size:
                raise LockError("phase ranges must start one past a whole rotation")
        self.check_start(self.start_default)

    @property
    def n_phases(self) -> int:
        return len(self.phases)

    @property
    def key_space_size(self) -> int:
        return self.dial_size**self.n_phases

    def check_start(self, start: int) -> int:
        if not (isinstance(start, (int, np.integer)) and 0 <= start < self.dial_size):
            raise LockError(f"start {start!r} outside [0, {self.dial_size})")
        return int(start)

    def check_key(self, key: "CombinationKey | Sequence[int]") -> "CombinationKey":
        key = CombinationKey(tuple(int(d) for d in key))
        if len(key) != self.n_phases:
            raise LockError(f"{self.name} keys have {self.n_phases} digits, got {len(key)}")
        for d in key:
            if not 0 <= d < self.dial_size:
                raise LockError(f"digit {d} outside [0, {self.dial_size})")
        return key

    def min_length(self) -> int:
        return sum(p.transition_min for p in self.phases)

    def max_length(self) -> int:
        return sum(p.transition_max for p in self.phases)


class CombinationKey(tuple):
    """Digits of a key, e.g. ``CombinationKey((10, 30, 0))``."""

    def __new__(cls, digits: Iterable[int] = ()):
        return super().__new__(cls, (int(d) for d in digits))

    def __str__(self):
        return "-".join(str(d) for d in self)

    @classmethod
    def parse(cls, text: str) -> "CombinationKey":
        parts = text.strip().split("-")
        try:
            return cls(int(p) for p in parts)
        except ValueError:
            raise LockError(f"malformed key {text!r}") from None


PADLOCK = LockSpec(
    name="padlock",
    dial_size=40,
    phases=(
        PhaseSpec(CW, 81, 120),
        PhaseSpec(CCW, 41, 80),
        PhaseSpec(CW, 1, 40),
    ),
)

SAFE = LockSpec(
    name="safe",
    dial_size=100,
    phases=(
        PhaseSpec(CCW, 401, 500),
        PhaseSpec(CW, 201, 300),
        PhaseSpec(CCW, 101, 200),
        PhaseSpec(CW, 1, 100),
    ),
)

BUILTIN_SPECS = {PADLOCK.name: PADLOCK, SAFE.name: SAFE}


def get_spec(name: str) -> LockSpec:
    try:
        return BUILTIN_SPECS[name]
    except KeyError:
        raise LockError(f"unknown lock {name!r}; choose from {sorted(BUILTIN_SPECS)}") from None


def spec_to_dict(spec: LockSpec) -> dict:
    return {
        "name": spec.name,
        "dial_size": spec.dial_size,
        "start_default": spec.start_default,
        "phases": [
            {"direction": p.direction, "transition_min": p.transition_min, "transition_max": p.transition_max}
            for p in spec.phases
        ],
    }


def spec_from_dict(d: dict) -> LockSpec:
    try:
        return LockSpec(
            name=str(d["name"]),
            dial_size=int(d["dial_size"]),
            phases=tuple(
                PhaseSpec(str(p["direction"]), int(p["transition_min"]), int(p["transition_max"]))
                for p in d["phases"]
            ),
            start_default=int(d.get("start_default", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise LockError(f"malformed lock definition: missing {exc}") from None


def resolve_spec(selector: str | Path) -> LockSpec:
    """Built-in lock by name, otherwise a JSON lock definition file."""
    if isinstance(selector, str) and selector in BUILTIN_SPECS:
        return BUILTIN_SPECS[selector]
    path = Path(selector)
    if not path.is_file():
        raise LockError(f"unknown lock {str(selector)!r}: not a built-in name or a readable file")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LockError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return spec_from_dict(data)


def key_to_transitions(key, start: int, spec: LockSpec) -> tuple[int, ...]:
    key = spec.check_key(key)
    prev = spec.check_start(start)
    n = spec.dial_size
    theta = []
    for digit, ph in zip(key, spec.phases):
        r = (ph.sign * (digit - prev)) % n
        theta.append(ph.transition_min - 1 + (r or n))
        prev = digit
    return tuple(theta)


def transitions_to_key(theta: Sequence[int], start: int, spec: LockSpec) -> CombinationKey:
    pos = spec.check_start(start)
    if len(theta) != spec.n_phases:
        raise LockError(f"expected {spec.n_phases} transitions, got {len(theta)}")
    digits = []
    for th, ph in zip(theta, spec.phases):
        if th != int(th) or not ph.contains(th):
            raise LockError(
                f"transition {th} outside [{ph.transition_min}, {ph.transition_max}]"
            )
        pos = (pos + ph.sign * int(th)) % spec.dial_size
        digits.append(pos)
    return CombinationKey(digits)


def transitions_to_keys_array(theta: np.ndarray, start: int, spec: LockSpec) -> np.ndarray:
    """Vectorised :func:`transitions_to_key` over rows of an ``(M, P)`` array.

    No range check; callers pass in-range candidates.
    """
    theta = np.asarray(theta, dtype=np.int64)
    signs = np.array([ph.sign for ph in spec.phases], dtype=np.int64)
    return (start + np.cumsum(theta * signs, axis=1)) % spec.dial_size


def combination_length(key, start: int, spec: LockSpec) -> int:
    return int(sum(key_to_transitions(key, start, spec)))


def lex_index(keys: np.ndarray, dial_size: int) -> np.ndarray:
    """Integer whose order equals lexicographic digit order of each key row."""
    keys = np.asarray(keys, dtype=np.int64)
    out = np.zeros(keys.shape[0], dtype=np.int64)
    for col in range(keys.shape[1]):
        out = out * dial_size + keys[:, col]
    return out


# --------------------------------------------------------------------------
# key sets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class KeySet:
    keys: frozenset
    provenance: str
    spec: LockSpec

    def __len__(self):
        return len(self.keys)

    def __contains__(self, key):
        return CombinationKey(key) in self.keys

    def __iter__(self):
        return iter(sorted(self.keys))

    def as_array(self) -> np.ndarray:
        return np.array(sorted(self.keys), dtype=np.int64).reshape(-1, self.spec.n_phases)


def factory_padlock_keys() -> list[CombinationKey]:
    """The 4000-member padlock set: a = c (mod 4) and b = c + 2 (mod 4)."""
    return [
        CombinationKey((a, b, c))
        for a, b, c in itertools.product(range(40), repeat=3)
        if (a - c) % 4 == 0 and (b - c - 2) % 4 == 0
    ]


def implemented_key_set(spec: LockSpec, source: str | Path = "rule") -> KeySet:
    """Key set used for restricted ranking.

    ``source="rule"`` builds the factory padlock set; anything else is read
    as a key-list file.
    """
    if isinstance(source, str) and source == "rule":
        if spec.name != PADLOCK.name or spec != PADLOCK:
            raise LockError(f"rule-generated key set only defined for the padlock, not {spec.name}")
        return KeySet(frozenset(factory_padlock_keys()), "generated-rule", spec)
    return load_key_set(source, spec)


def load_key_set(path: str | Path, spec: LockSpec) -> KeySet:
    keys = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                keys.add(spec.check_key(CombinationKey.parse(line)))
            except LockError as exc:
                raise LockError(f"{path}:{lineno}: {exc}") from None
    return KeySet(frozenset(keys), "file", spec)


def write_key_set(path: str | Path, keys: Iterable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k in keys:
            fh.write(f"{CombinationKey(k)}\n")


def keys_to_transitions_array(keys: np.ndarray, start: int, spec: LockSpec) -> np.ndarray:
    """Vectorised :func:`key_to_transitions` over rows of an ``(M, P)`` array."""
    keys = np.asarray(keys, dtype=np.int64)
    n = spec.dial_size
    prev = np.concatenate([np.full((keys.shape[0], 1), start, dtype=np.int64), keys[:, :-1]], axis=1)
    signs = np.array([ph.sign for ph in spec.phases], dtype=np.int64)
    base = np.array([ph.transition_min - 1 for ph in spec.phases], dtype=np.int64)
    r = (signs * (keys - prev)) % n
    return base + np.where(r == 0, n, r)


def grid_key_set(spec: LockSpec, step: int = 5, start: int | None = None) -> KeySet:
    """Keys whose transitions are every ``step``-th unit of each phase range,
    ending at the range maximum (e.g. 405, 410, ..., 500 for the safe)."""
    start = spec.start_default if start is None else spec.check_start(start)
    axes = [np.arange(ph.transition_max, ph.transition_min - 1, -step)[::-1] for ph in spec.phases]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.n_phases)
    keys = transitions_to_keys_array(grid, start, spec)
    return KeySet(frozenset(CombinationKey(k) for k in keys.tolist()), f"grid-step-{step}", spec)
