"""Kernel backend selection.

Hot numeric loops ship in two functionally equivalent flavors: numba
``@njit`` kernels and pure-numpy fallbacks.  Setting the environment
variable ``PROCTORKIT_NO_NUMBA=1`` (before import) forces the numpy path;
otherwise numba is used when importable.  ``BACKEND`` records the active
choice for benchmarks and logs.
"""

import os

_flag = os.environ.get("PROCTORKIT_NO_NUMBA", "").strip().lower()
NUMBA_DISABLED = _flag in {"1", "true", "yes"}

if not NUMBA_DISABLED:
    try:
        from numba import njit  # noqa: F401
        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


def jit(func):
    """Apply ``@njit(cache=True)`` when the numba backend is active."""
    if USE_NUMBA:
        from numba import njit
        return njit(cache=True)(func)
    return func
