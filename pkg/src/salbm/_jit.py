"""numba switch.

Set ``SALBM_DISABLE_NUMBA=1`` to force the pure-numpy kernels.  The same
path is taken automatically when numba cannot be imported.
"""

import os
import warnings

_DISABLED = os.environ.get("SALBM_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("disabled by SALBM_DISABLE_NUMBA")
    # an old system TBB only disables that threading layer; the warning is noise
    warnings.filterwarnings("ignore", message=".*TBB.*", module="numba.*")
    import numba
    from numba import prange

    HAVE_NUMBA = True
except ImportError as exc:  # pragma: no cover - depends on environment
    numba = None
    prange = range
    HAVE_NUMBA = False
    if not _DISABLED:
        warnings.warn(f"numba unavailable ({exc}); using numpy kernels", RuntimeWarning)


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` or a no-op decorator."""
    if func is None:
        return lambda f: njit(f, **kwargs)
    if not HAVE_NUMBA:
        return func
    kwargs.setdefault("cache", True)
    return numba.njit(**kwargs)(func)


def set_threads(n):
    """Cap the numba worker count.  Results never depend on it."""
    if HAVE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
