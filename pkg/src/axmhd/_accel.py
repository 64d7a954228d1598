"""Numba switch.

Kernels are compiled with numba when it is importable and the environment
variable ``AXMHD_DISABLE_NUMBA`` is unset (or ``0``).  Otherwise the pure
numpy implementations are used.  The flag is read once at import time.
"""

import os

_flag = os.environ.get("AXMHD_DISABLE_NUMBA", "0").strip().lower()
DISABLED = _flag not in ("", "0", "false", "no")

try:  # pragma: no cover - depends on environment
    if DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if USE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(fn):
        return fn

    return wrap
