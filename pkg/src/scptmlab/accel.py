"""Optional numba acceleration for the hot Monte Carlo kernel.

Set SCPTMLAB_NUMBA=0 to force the pure-Python/numpy fallback. The kernel
source is shared between both paths, so results are bit-identical either way.
"""

import os


def numba_enabled() -> bool:
    flag = os.environ.get("SCPTMLAB_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def maybe_njit(func):
    """Apply numba.njit unless disabled by env flag or numba is missing."""
    if numba_enabled():
        from numba import njit

        return njit(cache=True)(func)
    return func
