"""Kernel backend selection.

The scalar root-finding loops behind the smoothed proximal operator run either
as numba-compiled loops or as vectorized numpy code. Numba is used when it is
importable unless ``SASBD_DISABLE_NUMBA`` is set to a truthy value.
"""

import os

__all__ = ["USE_NUMBA", "njit", "backend_name"]


def _env_disabled() -> bool:
    val = os.environ.get("SASBD_DISABLE_NUMBA", "").strip().lower()
    return val not in ("", "0", "false", "no")


USE_NUMBA = False
if not _env_disabled():
    try:
        from numba import njit as _numba_njit

        USE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise an identity decorator."""
    if USE_NUMBA:
        return _numba_njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
