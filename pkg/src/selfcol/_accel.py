"""Numba switch.

Set ``SELFCOL_NO_NUMBA=1`` to run every kernel through its numpy / pure
Python fallback. ``SELFCOL_NUM_THREADS`` caps numba's thread pool.
"""

from __future__ import annotations

import os
import warnings

_DISABLED = os.environ.get("SELFCOL_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("disabled by SELFCOL_NO_NUMBA")
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError as exc:  # pragma: no cover - depends on environment
    numba = None
    HAVE_NUMBA = False
    if not _DISABLED:
        warnings.warn(f"numba unavailable ({exc}); using numpy fallbacks")

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def deco(func):
            return func

        return deco


JIT_OPTS = dict(cache=True, nogil=True, error_model="numpy")


def use_numba() -> bool:
    return HAVE_NUMBA


def set_threads_from_env() -> None:
    n = os.environ.get("SELFCOL_NUM_THREADS")
    if not n or not HAVE_NUMBA:
        return
    try:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    except ValueError:
        warnings.warn(f"ignoring SELFCOL_NUM_THREADS={n!r}")


set_threads_from_env()
