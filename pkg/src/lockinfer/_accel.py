"""Numba switch.

Hot kernels are written once in plain Python/numpy style and compiled with
``numba.njit`` when available. Setting ``LOCKINFER_DISABLE_NUMBA=1`` (or
running without numba installed) routes every dispatcher to the vectorised
numpy fallback instead.
"""

import os
from warnings import warn

_FLAG = "LOCKINFER_DISABLE_NUMBA"

try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb = None


def _env_disabled():
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


HAVE_NUMBA = _nb is not None
USE_NUMBA = HAVE_NUMBA and not _env_disabled()

if not HAVE_NUMBA and not _env_disabled():  # pragma: no cover
    warn("numba not found; falling back to numpy kernels", RuntimeWarning)


def njit(*args, **kwargs):
    """``numba.njit`` with caching on, or an identity decorator without numba."""
    if _nb is None:  # pragma: no cover
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return _nb.njit(*args, **kwargs)


def backend():
    return "numba" if USE_NUMBA else "numpy"
