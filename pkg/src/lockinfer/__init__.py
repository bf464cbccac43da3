"""Infer rotary combination-lock keys from wrist gyroscope traces."""

__version__ = "0.1.0"

from ._accel import backend
from .attack import AttackProfile, infer_key_deterministic, published_profile, rank_keys_exhaustive, rank_keys_lazy
from .lockmodel import PADLOCK, SAFE, CombinationKey, LockSpec, key_to_transitions, transitions_to_key
from .signal import GyroTrace, load_trace

__all__ = [
    "AttackProfile",
    "CombinationKey",
    "GyroTrace",
    "LockSpec",
    "PADLOCK",
    "SAFE",
    "backend",
    "infer_key_deterministic",
    "key_to_transitions",
    "load_trace",
    "published_profile",
    "rank_keys_exhaustive",
    "rank_keys_lazy",
    "transitions_to_key",
]
